//! Harmony-search evolution over objective-generating prompt plans.
//!
//! An individual is one full simulated run in which every decision epoch is
//! driven by an operator choice: W1 asks for a fresh objective, W2 refines an
//! elite parent's objectives, W3 reinvents them. Memory consideration
//! (probability `hmcr`) picks a parent by rank; pitch adjustment
//! (probability `par`) then selects W2 over W3.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dispatch::{epoch_count, run_episode, DispatchConfig, DispatchError};
use crate::exec::Execution;
use crate::generator::{compose_prompt, extract_objective, render_dyn, ObjectiveGenerator, PromptParts};
use crate::metrics::Metrics;
use crate::network::{Scenario, TravelTimeMatrix};
use crate::objective::{builtin, ObjectiveSpec};
use crate::sim::{DynContext, SimEvent};

pub use crate::generator::OperatorKind;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid harmony-search parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsParams {
    pub hmcr: f64,
    pub par: f64,
    pub pop_size: usize,
    pub iterations: usize,
    /// Decision epochs per run; [`run_evolution`] sets it from the scenario.
    pub steps: usize,
    pub seed: u64,
}

impl Default for HsParams {
    fn default() -> Self {
        Self {
            hmcr: 0.9,
            par: 0.2,
            pop_size: 5,
            iterations: 10,
            steps: 4,
            seed: 0,
        }
    }
}

impl HsParams {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !prob(self.hmcr) || !prob(self.par) {
            return Err(EvolveError::Params("hmcr and par must lie in [0, 1]".into()));
        }
        if self.pop_size == 0 || self.iterations == 0 || self.steps == 0 {
            return Err(EvolveError::Params("pop_size, iterations and steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorChoice {
    pub kind: OperatorKind,
    /// Rank of the parent in the population the plan was drawn from.
    pub parent: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    OpenLoop,
    ClosedLoop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub operator: OperatorKind,
    pub snapshot_digest: String,
    pub snapshot: String,
    pub objective: ObjectiveSpec,
    /// Raw generator reply; `None` when the epoch reused an earlier objective.
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub per_step: Vec<StepRecord>,
    /// Mean passenger wait in minutes.
    pub fitness: f64,
    pub queries: usize,
    pub errors: usize,
    #[serde(skip)]
    pub events: Vec<SimEvent>,
    #[serde(skip)]
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Population {
    /// Ascending by fitness.
    pub members: Vec<Individual>,
}

impl Population {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// Linear rank selection: rank `r` (0 = best) has weight `N − r`.
pub fn select_individual<R: Rng + ?Sized>(pop: &Population, rng: &mut R) -> usize {
    let n = pop.len();
    assert!(n > 0, "selection from an empty population");
    let dist = WeightedIndex::new((0..n).map(|r| (n - r) as u64)).expect("positive weights");
    dist.sample(rng)
}

/// One operator choice per step. The first iteration is all W1, as is any
/// step drawn while the population is still empty.
pub fn generate_plan<R: Rng + ?Sized>(
    pop: &Population,
    params: &HsParams,
    first_iteration: bool,
    rng: &mut R,
) -> Vec<OperatorChoice> {
    let w1 = OperatorChoice {
        kind: OperatorKind::W1Random,
        parent: None,
    };
    if first_iteration {
        return vec![w1; params.steps];
    }
    (0..params.steps)
        .map(|_| {
            let alpha: f64 = rng.random();
            if alpha > params.hmcr {
                return w1;
            }
            if pop.is_empty() {
                log::warn!("memory consideration with an empty population, falling back to W1");
                return w1;
            }
            let parent = select_individual(pop, rng);
            let kind = if rng.random_bool(params.par) {
                OperatorKind::W2Heuristic
            } else {
                OperatorKind::W3Innovative
            };
            OperatorChoice {
                kind,
                parent: Some(parent),
            }
        })
        .collect()
}

/// Objectives and fitness only: `epoch <t>: <json>` per step, then
/// `fitness: <f>`.
pub fn token_select(ind: &Individual) -> String {
    let mut s = String::new();
    for step in &ind.per_step {
        s.push_str(&format!("epoch {}: {}\n", step.epoch, step.objective.to_json()));
    }
    s.push_str(&format!("fitness: {:.4}", ind.fitness));
    s
}

/// Objectives back out of [`token_select`] text.
pub fn parse_condensed(text: &str) -> Vec<ObjectiveSpec> {
    text.lines()
        .filter(|l| l.starts_with("epoch "))
        .filter_map(|l| l.split_once(": ").and_then(|(_, j)| crate::objective::parse(j).ok()))
        .collect()
}

/// Merge, stable sort ascending by fitness (incumbents ahead of equal
/// newcomers), keep the best `n`.
pub fn update_population(pop: Population, fresh: Vec<Individual>, n: usize) -> Population {
    let mut members = pop.members;
    members.extend(fresh);
    members.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    members.truncate(n);
    Population { members }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Best fitness in the population after the update.
    pub best: f64,
    /// Mean fitness of the individuals evaluated in this iteration.
    pub mean: f64,
    pub error_rate: f64,
    pub queries: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub scenario: String,
    pub mode: LoopMode,
    pub params: HsParams,
    pub iterations: Vec<IterationRecord>,
    pub best_fitness: f64,
    pub best_condensed: String,
    pub best_objectives: Vec<ObjectiveSpec>,
    pub total_queries: usize,
    pub total_errors: usize,
    pub error_rate: f64,
    pub individuals: Vec<Individual>,
    #[serde(skip)]
    pub best_metrics: Option<Metrics>,
    #[serde(skip)]
    pub best_events: Vec<SimEvent>,
}

#[derive(Clone, Debug, Default)]
pub struct EvolveConfig {
    pub dispatch: DispatchConfig,
    /// How the rounds of one iteration are evaluated.
    pub rounds: Execution,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn round_rng(seed: u64, iteration: usize, round: usize) -> ChaCha8Rng {
    let k = ((iteration as u64) << 32) | round as u64;
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(k)))
}

fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct Evaluator<'a> {
    pub scenario: &'a Scenario,
    pub matrix: &'a TravelTimeMatrix,
    pub parts: &'a PromptParts,
    pub generator: &'a dyn ObjectiveGenerator,
    pub mode: LoopMode,
    pub dispatch: &'a DispatchConfig,
}

impl Evaluator<'_> {
    /// Runs one individual. `parents[r]` is the condensed text of the member
    /// at rank `r` of the population the plan was drawn from.
    pub fn evaluate(&self, id: String, plan: &[OperatorChoice], parents: &[String]) -> Result<Individual, EvolveError> {
        let default = builtin("default_composite").expect("builtin exists");
        let mut per_step: Vec<StepRecord> = Vec::with_capacity(plan.len());
        let mut queries = 0;
        let mut errors = 0;
        let mut current: Option<ObjectiveSpec> = None;

        let mut objective_for = |epoch: usize, ctx: &DynContext| -> ObjectiveSpec {
            let choice = plan[epoch.min(plan.len() - 1)];
            let previous = current.as_ref().map(ObjectiveSpec::to_json);
            let snapshot = render_dyn(epoch, ctx, &id, previous.as_deref());
            let snapshot_digest = digest(&snapshot);
            if let (LoopMode::OpenLoop, Some(spec)) = (self.mode, &current) {
                per_step.push(StepRecord {
                    epoch,
                    operator: choice.kind,
                    snapshot_digest,
                    snapshot,
                    objective: spec.clone(),
                    response: None,
                    error: None,
                });
                return spec.clone();
            }
            let parent = choice.parent.and_then(|r| parents.get(r)).map(String::as_str);
            let (spec, response, error) = match compose_prompt(self.parts, choice.kind, parent, &snapshot) {
                Err(e) => (default.clone(), None, Some(e.to_string())),
                Ok(prompt) => {
                    queries += 1;
                    match self.generator.query(&prompt) {
                        Err(e) => (default.clone(), None, Some(e.to_string())),
                        Ok(text) => match extract_objective(&text) {
                            Ok(spec) => (spec, Some(text), None),
                            Err(e) => (default.clone(), Some(text), Some(e.to_string())),
                        },
                    }
                }
            };
            if error.is_some() {
                errors += 1;
            }
            per_step.push(StepRecord {
                epoch,
                operator: choice.kind,
                snapshot_digest,
                snapshot,
                objective: spec.clone(),
                response,
                error,
            });
            current = Some(spec.clone());
            spec
        };

        let outcome = run_episode(self.scenario, self.matrix, self.dispatch, &mut objective_for)?;
        let error_rate = if queries == 0 { 0.0 } else { errors as f64 / queries as f64 };
        let mut metrics = outcome.metrics;
        metrics.error_rate = error_rate;
        metrics.method = match self.mode {
            LoopMode::OpenLoop => "evolve_open_loop".into(),
            LoopMode::ClosedLoop => "evolve_closed_loop".into(),
        };
        Ok(Individual {
            id,
            per_step,
            fitness: metrics.mean_wait_min,
            queries,
            errors,
            events: outcome.trace.events,
            metrics: Some(metrics),
        })
    }
}

/// Iterations × rounds of plan generation, simulated evaluation and
/// elitist population update.
pub fn run_evolution(
    scenario: &Scenario,
    matrix: &TravelTimeMatrix,
    params: &HsParams,
    generator: &dyn ObjectiveGenerator,
    mode: LoopMode,
    cfg: &EvolveConfig,
) -> Result<EvolutionReport, EvolveError> {
    let mut params = params.clone();
    params.steps = epoch_count(scenario.spec.window, cfg.dispatch.dt.max(1));
    params.validate()?;
    let parts = PromptParts::standard(matrix);
    let eval = Evaluator {
        scenario,
        matrix,
        parts: &parts,
        generator,
        mode,
        dispatch: &cfg.dispatch,
    };

    let mut pop = Population::default();
    let mut records = Vec::with_capacity(params.iterations);
    let mut all = Vec::new();
    for it in 0..params.iterations {
        let parents: Vec<String> = pop.members.iter().map(token_select).collect();
        let results = cfg.rounds.map_range(params.pop_size, |r| {
            let mut rng = round_rng(params.seed, it, r);
            let plan = generate_plan(&pop, &params, it == 0, &mut rng);
            eval.evaluate(format!("i{it}-r{r}"), &plan, &parents)
        });
        let fresh = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let queries: usize = fresh.iter().map(|i| i.queries).sum();
        let errors: usize = fresh.iter().map(|i| i.errors).sum();
        let mean = fresh.iter().map(|i| i.fitness).sum::<f64>() / fresh.len() as f64;
        all.extend(fresh.iter().cloned().map(|mut i| {
            i.events.clear();
            i.metrics = None;
            i
        }));
        pop = update_population(pop, fresh, params.pop_size);
        records.push(IterationRecord {
            iteration: it,
            best: pop.members[0].fitness,
            mean,
            error_rate: if queries == 0 { 0.0 } else { errors as f64 / queries as f64 },
            queries,
        });
        log::info!("iteration {it}: best {:.4} min, mean {mean:.4} min", pop.members[0].fitness);
    }

    let best = pop.members.into_iter().next().expect("population is non-empty");
    let total_queries: usize = records.iter().map(|r| r.queries).sum();
    let total_errors: usize = all.iter().map(|i| i.errors).sum();
    Ok(EvolutionReport {
        scenario: scenario.name(),
        mode,
        params,
        iterations: records,
        best_fitness: best.fitness,
        best_condensed: token_select(&best),
        best_objectives: best.per_step.iter().map(|s| s.objective.clone()).collect(),
        total_queries,
        total_errors,
        error_rate: if total_queries == 0 {
            0.0
        } else {
            total_errors as f64 / total_queries as f64
        },
        individuals: all,
        best_metrics: best.metrics,
        best_events: best.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(fitness: f64, tag: &str) -> Individual {
        Individual {
            id: tag.into(),
            per_step: Vec::new(),
            fitness,
            queries: 0,
            errors: 0,
            events: Vec::new(),
            metrics: None,
        }
    }

    fn fits(p: &Population) -> Vec<f64> {
        p.members.iter().map(|i| i.fitness).collect()
    }

    #[test]
    fn sort_truncate() {
        let pop = Population {
            members: [3.0, 5.0, 7.0, 9.0, 11.0].iter().map(|&f| ind(f, "old")).collect(),
        };
        let next = update_population(pop.clone(), vec![ind(4.0, "new")], 5);
        assert_eq!(fits(&next), vec![3.0, 4.0, 5.0, 7.0, 9.0]);
        let same = update_population(pop.clone(), vec![ind(20.0, "new")], 5);
        assert_eq!(same, pop);
        let boot = update_population(Population::default(), vec![ind(2.0, "a"), ind(1.0, "b")], 5);
        assert_eq!(fits(&boot), vec![1.0, 2.0]);
        let tie = update_population(pop, vec![ind(3.0, "new")], 5);
        assert_eq!(tie.members[0].id, "old");
    }

    #[test]
    fn degenerate_plans() {
        let pop = Population {
            members: vec![ind(1.0, "a")],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = HsParams {
            hmcr: 1.0,
            par: 1.0,
            steps: 50,
            ..HsParams::default()
        };
        assert!(generate_plan(&pop, &p, false, &mut rng).iter().all(|c| c.kind == OperatorKind::W2Heuristic));
        let p = HsParams { hmcr: 0.0, ..p };
        assert!(generate_plan(&pop, &p, false, &mut rng).iter().all(|c| c.kind == OperatorKind::W1Random));
        let p = HsParams { hmcr: 1.0, ..p };
        assert!(generate_plan(&pop, &p, true, &mut rng).iter().all(|c| c.parent.is_none()));
        assert!(generate_plan(&Population::default(), &p, false, &mut rng)
            .iter()
            .all(|c| c.kind == OperatorKind::W1Random));
    }

    #[test]
    fn single_member_always_selected() {
        let pop = Population {
            members: vec![ind(1.0, "a")],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..100).all(|_| select_individual(&pop, &mut rng) == 0));
    }

    #[test]
    fn condensed_round_trip() {
        let spec = builtin("dist_util").unwrap();
        let mut i = ind(2.5, "x");
        for epoch in 0..4 {
            i.per_step.push(StepRecord {
                epoch,
                operator: OperatorKind::W1Random,
                snapshot_digest: "d".into(),
                snapshot: "taxis: 3\nlots of state".into(),
                objective: spec.clone(),
                response: Some("raw".into()),
                error: None,
            });
        }
        let text = token_select(&i);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(parse_condensed(&text), vec![spec; 4]);
        assert!(text.len() < serde_json::to_string(&i).unwrap().len());
    }

    #[test]
    fn params_checked() {
        assert!(HsParams { hmcr: 1.5, ..HsParams::default() }.validate().is_err());
        assert!(HsParams { pop_size: 0, ..HsParams::default() }.validate().is_err());
        assert!(HsParams::default().validate().is_ok());
    }
}
