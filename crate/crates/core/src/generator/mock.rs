use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::prompt::OperatorKind;
use super::{extract_objective, GeneratorError, ObjectiveGenerator};
use crate::objective::{CostComponent, Expr, Feature, ObjectiveSpec};

fn rng_for(seed: u64, salt: &str, prompt: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(salt.as_bytes());
    h.update(prompt.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Value of a `key: value` line.
fn line_value<'a>(prompt: &'a str, key: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .map(str::trim)
}

fn operator_of(prompt: &str) -> OperatorKind {
    if prompt.contains("Develop an improved objective function") {
        OperatorKind::W2Heuristic
    } else if prompt.contains("Reinvent the objective function") {
        OperatorKind::W3Innovative
    } else {
        OperatorKind::W1Random
    }
}

fn invalid_response(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..6) {
        0 => "I cannot help with that request.".to_string(),
        1 => {
            let c = r#"{"form":"LoadQuadratic"}"#;
            format!(r#"{{"components":[{c},{c},{c},{c},{c},{c}],"weights":[1,1,1,1,1,1]}}"#)
        }
        2 => r#"{"components":[{"form":"PairLinear","expr":"TR_origin_zone + 1"}],"weights":[1]}"#.to_string(),
        3 => r#"{"components":[{"form":"PairLinear","expr":"TR_trip * time_gap"}],"weights":[1]}"#.to_string(),
        4 => r#"{"components":[{"form":"LoadQuadratic"}],"weights":[1, 2]}"#.to_string(),
        _ => r#"Here is the objective: {"components": [{"form": "PairLinear", "expr": "TR_trip"#.to_string(),
    }
}

fn random_term(rng: &mut ChaCha8Rng) -> Expr {
    let f = |x| Expr::Feature(x);
    let base = match rng.random_range(0..7) {
        0 => f(Feature::TrOriginStart),
        1 => Expr::add(f(Feature::TrOriginStart), f(Feature::TrDestStart)),
        2 => f(Feature::TrDestStart),
        3 => Expr::abs(f(Feature::TimeGap)),
        4 => Expr::relu(Expr::Neg(Box::new(f(Feature::TimeGap)))),
        5 => Expr::relu(f(Feature::TimeGap)),
        _ => f(Feature::TrTrip),
    };
    let c = *[0.25, 0.5, 1.0, 1.0, 2.0].choose(rng).expect("non-empty");
    if c == 1.0 {
        base
    } else {
        Expr::scale(c, base)
    }
}

fn random_pair_expr(rng: &mut ChaCha8Rng) -> Expr {
    let mut e = Expr::feature(Feature::TrOriginStart);
    if rng.random_bool(0.3) {
        e = random_term(rng);
    }
    for _ in 0..rng.random_range(0..3) {
        e = Expr::add(e, random_term(rng));
    }
    e
}

fn random_objective(rng: &mut ChaCha8Rng, temporal_bias: bool) -> ObjectiveSpec {
    let mut expr = random_pair_expr(rng);
    if temporal_bias {
        expr = Expr::add(expr, Expr::abs(Expr::feature(Feature::TimeGap)));
    }
    let mut comps = vec![CostComponent::PairLinear(expr)];
    let mut weights = vec![1.0];
    if rng.random_bool(0.7) {
        comps.push(CostComponent::LoadQuadratic);
        weights.push(*[10.0, 50.0, 100.0, 200.0, 400.0].choose(rng).expect("non-empty"));
    }
    if rng.random_bool(0.15) {
        comps.push(CostComponent::LoadDeviation);
        weights.push(*[25.0, 100.0].choose(rng).expect("non-empty"));
    }
    if rng.random_bool(0.1) {
        comps.push(CostComponent::ChainQuadratic);
        weights.push(*[0.1, 0.5].choose(rng).expect("non-empty"));
    }
    ObjectiveSpec::new(comps, weights)
}

/// Parent objective for the epoch named in the prompt's state block.
fn parent_objective(prompt: &str) -> Option<ObjectiveSpec> {
    let epoch = line_value(prompt, "epoch")?;
    let key = format!("epoch {epoch}: ");
    let line = prompt.lines().find_map(|l| l.strip_prefix(key.as_str()))?;
    extract_objective(line).ok()
}

fn perturb(mut spec: ObjectiveSpec, rng: &mut ChaCha8Rng) -> ObjectiveSpec {
    for w in &mut spec.weights {
        *w *= *[0.5, 0.75, 1.0, 1.25, 1.5, 2.0].choose(rng).expect("non-empty");
    }
    if spec.components.len() < 5 && rng.random_bool(0.3) {
        let has_load = spec.components.iter().any(|c| matches!(c, CostComponent::LoadQuadratic));
        if has_load {
            spec.components.push(CostComponent::PairLinear(random_term(rng)));
            spec.weights.push(1.0);
        } else {
            spec.components.push(CostComponent::LoadQuadratic);
            spec.weights.push(100.0);
        }
    }
    spec
}

/// Deterministic offline generator: the response depends only on the seed
/// and the prompt bytes. A fraction `invalid_rate` of responses is unusable.
#[derive(Clone, Debug)]
pub struct MockGenerator {
    seed: u64,
    invalid_rate: f64,
}

impl MockGenerator {
    pub fn new(seed: u64, invalid_rate: f64) -> Self {
        Self { seed, invalid_rate }
    }
}

impl ObjectiveGenerator for MockGenerator {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError> {
        let mut rng = rng_for(self.seed, "mock", prompt);
        if rng.random::<f64>() < self.invalid_rate {
            return Ok(invalid_response(&mut rng));
        }
        let spec = match operator_of(prompt) {
            OperatorKind::W1Random => random_objective(&mut rng, false),
            OperatorKind::W2Heuristic => match parent_objective(prompt) {
                Some(p) => perturb(p, &mut rng),
                None => random_objective(&mut rng, false),
            },
            OperatorKind::W3Innovative => random_objective(&mut rng, true),
        };
        Ok(format!("Proposed objective:\n{}\n", spec.to_json()))
    }
}

/// Demand ratio above which [`AdaptiveMock`] adds a load-balancing term.
pub const ADAPTIVE_THRESHOLD: f64 = 1.0;

/// Scripted generator that reads the state block and weights utilization by
/// the demand per taxi: distance only when the fleet is lightly loaded,
/// distance plus a growing load term otherwise.
#[derive(Clone, Debug)]
pub struct AdaptiveMock {
    seed: u64,
    invalid_rate: f64,
}

impl AdaptiveMock {
    pub fn new(seed: u64, invalid_rate: f64) -> Self {
        Self { seed, invalid_rate }
    }

    pub fn objective_for_ratio(ratio: f64) -> ObjectiveSpec {
        let distance = CostComponent::PairLinear(Expr::add(
            Expr::feature(Feature::TrOriginStart),
            Expr::feature(Feature::TrDestStart),
        ));
        if ratio < ADAPTIVE_THRESHOLD {
            ObjectiveSpec::new(vec![distance], vec![1.0])
        } else {
            let w = (100.0 * ratio).round();
            ObjectiveSpec::new(vec![distance, CostComponent::LoadQuadratic], vec![1.0, w])
        }
    }
}

impl ObjectiveGenerator for AdaptiveMock {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError> {
        let mut rng = rng_for(self.seed, "adaptive", prompt);
        if rng.random::<f64>() < self.invalid_rate {
            return Ok(invalid_response(&mut rng));
        }
        let num = |k| line_value(prompt, k).and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0);
        let taxis = num("taxis").max(1.0);
        let ratio = (num("pending_requests") + num("busy_taxis")) / taxis;
        Ok(Self::objective_for_ratio(ratio).to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let g = MockGenerator::new(7, 0.0);
        for i in 0..200 {
            let prompt = format!("prompt {i}");
            let a = g.query(&prompt).unwrap();
            assert_eq!(a, g.query(&prompt).unwrap());
            extract_objective(&a).unwrap();
        }
    }

    #[test]
    fn always_invalid() {
        let g = MockGenerator::new(7, 1.0);
        for i in 0..200 {
            assert!(extract_objective(&g.query(&format!("p{i}")).unwrap()).is_err());
        }
    }

    #[test]
    fn heuristic_operator_keeps_parent_structure() {
        let parent = ObjectiveSpec::new(
            vec![CostComponent::PairLinear(Expr::feature(Feature::TrTrip)), CostComponent::LoadQuadratic],
            vec![1.0, 40.0],
        );
        let prompt = format!(
            "epoch: 1\nDevelop an improved objective function by x\nepoch 0: {{}}\nepoch 1: {}\nfitness: 2",
            parent.to_json()
        );
        let g = MockGenerator::new(3, 0.0);
        let child = extract_objective(&g.query(&prompt).unwrap()).unwrap();
        assert_eq!(child.components[..2], parent.components[..]);
    }

    #[test]
    fn adaptive_reads_load() {
        let g = AdaptiveMock::new(0, 0.0);
        let low = extract_objective(&g.query("taxis: 10\nbusy_taxis: 2\npending_requests: 3").unwrap()).unwrap();
        assert_eq!(low.components.len(), 1);
        let high = extract_objective(&g.query("taxis: 10\nbusy_taxis: 9\npending_requests: 30").unwrap()).unwrap();
        assert_eq!(high.components.len(), 2);
        assert_eq!(high.weights[1], 390.0);
    }
}
