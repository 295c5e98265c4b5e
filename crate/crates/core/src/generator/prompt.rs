use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::network::TravelTimeMatrix;
use crate::objective::Feature;
use crate::sim::DynContext;

/// Largest number of zones rendered in the geography block.
pub const GEO_ZONE_CAP: usize = 19;

pub const W1_SENTENCE: &str = "Please generate a new objective for first-level assignment model.";
const W2_SENTENCE: &str = "Develop an improved objective function by applying the directives below.";
const W3_SENTENCE: &str = "Reinvent the objective function from the previous run by applying the directives below.";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "W1")]
    W1Random,
    #[serde(rename = "W2")]
    W2Heuristic,
    #[serde(rename = "W3")]
    W3Innovative,
}

impl OperatorKind {
    pub fn needs_parent(self) -> bool {
        self != OperatorKind::W1Random
    }

    pub fn label(self) -> &'static str {
        match self {
            OperatorKind::W1Random => "W1",
            OperatorKind::W2Heuristic => "W2",
            OperatorKind::W3Innovative => "W3",
        }
    }
}

/// Static prompt blocks for one city.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptParts {
    pub sys: String,
    pub geo: String,
    pub model: String,
    pub restriction: String,
}

impl PromptParts {
    pub fn standard(matrix: &TravelTimeMatrix) -> Self {
        Self {
            sys: SYS.trim().to_string(),
            geo: render_geo(matrix),
            model: render_model(),
            restriction: RESTRICTION.trim().to_string(),
        }
    }
}

const SYS: &str = "
You design objective functions for the first-level assignment model of a taxi
dispatch system. At every decision epoch each pending passenger p is assigned
to exactly one taxi v (binary y[v,p], sum over v equals 1). A second-level
model then orders every taxi's passengers, one trip at a time, to minimize the
total passenger waiting time. Your objective should steer the assignment so
that this waiting time stays low.
";

const RESTRICTION: &str = r#"
Reply with exactly one JSON object of this shape and nothing that could be
mistaken for another JSON object:
{"components": [{"form": "PairLinear", "expr": "<expression>"}, {"form": "LoadQuadratic"}],
 "weights": [1.0, 1.0]}
Rules:
- 1 to 5 components; "weights" has one finite number per component.
- "form" is one of PairLinear, LoadQuadratic, LoadDeviation, ChainQuadratic.
- Expressions use only the listed features, numeric constants, +, -,
  multiplication by a constant, abs(...) and relu(...).
- Never multiply two features together; never branch on decision variables.
- Expression depth at most 8; every constant and weight within 1e9 in magnitude.
- big_m may appear inside at most one level of abs/relu.
"#;

fn render_model() -> String {
    let mut s = String::from(
        "Objective = sum_i weights[i] * component[i].\nComponent forms:\n\
         - PairLinear: sum over v, p of y[v,p] * expr(v, p)\n\
         - LoadQuadratic: sum over v of load_v^2, load_v = number of passengers on v\n\
         - LoadDeviation: sum over v of (load_v - P/C)^2\n\
         - ChainQuadratic: sum over v and p != q on v of TR(D_p, O_q)\n\
         Features available in expr (seconds):\n",
    );
    for f in Feature::ALL {
        let desc = match f {
            Feature::TrOriginStart => "travel time from the passenger origin to the taxi's next-free zone",
            Feature::TrDestStart => "travel time from the passenger destination to the taxi's next-free zone",
            Feature::TrTrip => "travel time from the passenger origin to its destination",
            Feature::TimeGap => "passenger request time minus taxi next-free time",
            Feature::RequestTime => "passenger request time",
            Feature::AvailTime => "taxi next-free time",
            Feature::BigM => "a large constant (1e6 unless overridden by a top-level \"big_m\")",
        };
        let _ = writeln!(s, "- {}: {desc}", f.name());
    }
    s.trim_end().to_string()
}

fn render_geo(matrix: &TravelTimeMatrix) -> String {
    let n = matrix.zone_count();
    let shown = n.min(GEO_ZONE_CAP);
    let mut s = format!("The city has {n} zones numbered 0 to {}.\n", n - 1);
    if shown < n {
        let _ = writeln!(s, "Travel times in seconds for the first {shown} zones (row = from, column = to):");
    } else {
        s.push_str("Travel times in seconds (row = from, column = to):\n");
    }
    let rows = matrix.rows();
    for row in rows.iter().take(shown) {
        let cells: Vec<String> = row.iter().take(shown).map(ToString::to_string).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s.trim_end().to_string()
}

/// State block. `tag` distinguishes otherwise identical requests (one per
/// candidate), `previous` carries the objective used at the prior epoch.
pub fn render_dyn(epoch: usize, snap: &DynContext, tag: &str, previous: Option<&str>) -> String {
    let busy = snap.vehicles.iter().filter(|v| v.free_at > snap.clock).count();
    let mut s = String::new();
    let _ = writeln!(s, "epoch: {epoch}");
    let _ = writeln!(s, "clock: {}", snap.clock);
    let _ = writeln!(s, "candidate: {tag}");
    let _ = writeln!(s, "taxis: {}", snap.vehicles.len());
    let _ = writeln!(s, "busy_taxis: {busy}");
    let _ = writeln!(s, "pending_requests: {}", snap.passengers.len());
    s.push_str("Taxis (id, next-free zone, next-free time):\n");
    for v in &snap.vehicles {
        let _ = writeln!(s, "{} {} {}", v.taxi, v.zone, v.free_at);
    }
    s.push_str("Pending requests (id, origin, destination, request time):\n");
    for p in &snap.passengers {
        let _ = writeln!(s, "{} {} {} {}", p.id, p.origin, p.destination, p.request_time);
    }
    if let Some(prev) = previous {
        let _ = writeln!(s, "Objective used at the previous epoch: {prev}");
    }
    s.trim_end().to_string()
}

fn operator_block(kind: OperatorKind, parent: Option<&str>) -> Result<String, GeneratorError> {
    let parent = match (kind.needs_parent(), parent) {
        (true, None) => return Err(GeneratorError::MissingParent(kind)),
        (true, Some(p)) => p,
        (false, _) => "",
    };
    Ok(match kind {
        OperatorKind::W1Random => format!("{W1_SENTENCE}\nDesign it from the current state alone."),
        OperatorKind::W2Heuristic => format!(
            "{W2_SENTENCE}\n\
             (a) Temporal alignment: coordinate taxi arrival times with passenger request times.\n\
             (b) Resource weighting: adapt the taxi utilization coefficients to the current load.\n\
             (c) Structural preservation: Maintain 50% legacy objective components.\n\
             Parent objectives, one line per epoch, and the parent's fitness \
             (mean wait in minutes, lower is better):\n{parent}"
        ),
        OperatorKind::W3Innovative => format!(
            "{W3_SENTENCE}\n\
             (a) Goal emphasis: prefer assignments that minimize the expected second-level waiting \
             time, sum over p of E[max(pickup_p - request_p, 0) | y].\n\
             (b) Multi-horizon optimization: consider the current and the likely future state together.\n\
             (c) Dynamic weight adaptation: let component weights vary with time and demand.\n\
             Previous run, one objective per epoch, and its fitness \
             (mean wait in minutes, lower is better):\n{parent}"
        ),
    })
}

/// Blocks in fixed order: sys, geo, model, dyn, operator, restriction.
pub fn compose_prompt(
    parts: &PromptParts,
    kind: OperatorKind,
    parent: Option<&str>,
    dyn_block: &str,
) -> Result<String, GeneratorError> {
    let op = operator_block(kind, parent)?;
    Ok(format!(
        "## System\n{}\n\n## Geography\n{}\n\n## Model\n{}\n\n## Current state\n{}\n\n## Task\n{}\n\n## Output format\n{}\n",
        parts.sys, parts.geo, parts.model, dyn_block, op, parts.restriction
    ))
}
