//! Epoch loop: snapshot, objective, assignment, sequencing, merge, advance.
//!
//! With horizon `T` and epoch length `Δt` there are `ceil(T / Δt)` epochs at
//! clocks `0, Δt, 2Δt, …`. The epoch at clock `t` plans every pending request
//! with request time before `t + Δt` (the last epoch plans all that remain).
//! After the final epoch the fleet runs until every queue drains.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::assign::{solve_with, AssignConfig, AssignError, Assignment};
use crate::exec::Execution;
use crate::metrics::Metrics;
use crate::network::{PassengerRequest, Scenario, Seconds, TravelTimeMatrix};
use crate::objective::ObjectiveSpec;
use crate::sequence::{solve_sequence, Route, SeqError, SEQ_EXACT_LIMIT};
use crate::sim::{collect_metrics, DynContext, SimError, SimTrace, Simulation, Task, VehicleState};

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error("epoch length must be at least one second")]
    ZeroEpoch,
}

#[derive(Clone, Debug)]
pub struct DispatchConfig {
    pub dt: Seconds,
    pub bin_seconds: Seconds,
    pub assign: AssignConfig,
    pub exec: Execution,
    /// Upper bound on the drain phase after the last epoch.
    pub max_drain: Seconds,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self {
            dt: 300,
            bin_seconds: 600,
            assign: AssignConfig::default(),
            exec: Execution::Sequential,
            max_drain: 30 * 24 * 3600,
        }
    }
}

pub fn epoch_count(window: Seconds, dt: Seconds) -> usize {
    (window.div_ceil(dt) as usize).max(1)
}

#[derive(Clone, Debug)]
pub struct EpochPlan {
    pub assignment: Assignment,
    /// One route per vehicle slot.
    pub routes: Vec<Route>,
    pub plan: BTreeMap<usize, Vec<Task>>,
}

impl EpochPlan {
    pub fn total_wait(&self) -> Seconds {
        self.routes.iter().map(|r| r.total_wait).sum()
    }
}

/// Sequences a taxi's passengers exactly; more than [`SEQ_EXACT_LIMIT`] are
/// split by request time into consecutive exact blocks.
pub fn sequence_taxi(
    veh: &VehicleState,
    assigned: &[PassengerRequest],
    matrix: &TravelTimeMatrix,
) -> Result<Route, SeqError> {
    if assigned.len() <= SEQ_EXACT_LIMIT {
        return solve_sequence(veh, assigned, matrix);
    }
    let mut sorted = assigned.to_vec();
    sorted.sort_by_key(|p| (p.request_time, p.id));
    let mut start = *veh;
    let mut route = Route::empty(veh.taxi);
    for chunk in sorted.chunks(SEQ_EXACT_LIMIT) {
        let part = solve_sequence(&start, chunk, matrix)?;
        let (zone, free_at) = part.end(&start);
        start = VehicleState {
            taxi: veh.taxi,
            zone,
            free_at,
        };
        route.order.extend(part.order);
        route.schedule.extend(part.schedule);
        route.total_wait += part.total_wait;
    }
    Ok(route)
}

/// Assignment followed by per-taxi sequencing on one snapshot.
pub fn plan_epoch(
    spec: &ObjectiveSpec,
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
    cfg: &DispatchConfig,
) -> Result<EpochPlan, DispatchError> {
    let assignment = solve_with(spec, snap, matrix, &cfg.assign)?;
    let groups = assignment.groups(snap.vehicles.len());
    let routes = cfg
        .exec
        .map_range(snap.vehicles.len(), |v| {
            let ps: Vec<_> = groups[v].iter().map(|&i| snap.passengers[i]).collect();
            sequence_taxi(&snap.vehicles[v], &ps, matrix)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let plan = routes
        .iter()
        .filter(|r| !r.order.is_empty())
        .map(|r| (r.taxi, r.to_tasks()))
        .collect();
    Ok(EpochPlan {
        assignment,
        routes,
        plan,
    })
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub trace: SimTrace,
    pub metrics: Metrics,
    pub epochs: usize,
}

/// Runs one scenario to completion. `objective_for(epoch, ctx)` supplies the
/// first-level objective for each epoch given the released snapshot.
pub fn run_episode<F>(
    scenario: &Scenario,
    matrix: &TravelTimeMatrix,
    cfg: &DispatchConfig,
    mut objective_for: F,
) -> Result<EpisodeOutcome, DispatchError>
where
    F: FnMut(usize, &DynContext) -> ObjectiveSpec,
{
    if cfg.dt == 0 {
        return Err(DispatchError::ZeroEpoch);
    }
    let epochs = epoch_count(scenario.spec.window, cfg.dt);
    let mut sim = Simulation::new(scenario, matrix);
    for e in 0..epochs {
        let snap = sim.snapshot();
        let ctx = if e + 1 == epochs {
            snap
        } else {
            snap.released_before((e as Seconds + 1) * cfg.dt)
        };
        let spec = objective_for(e, &ctx);
        if !ctx.passengers.is_empty() {
            let plan = plan_epoch(&spec, &ctx, matrix, cfg)?;
            sim.merge_commands(&plan.plan)?;
        }
        sim.step(cfg.dt)?;
    }
    sim.run_until_idle(cfg.dt, cfg.max_drain)?;
    let trace = sim.into_trace();
    let metrics = collect_metrics(&trace, cfg.bin_seconds, matrix.zone_count())?;
    Ok(EpisodeOutcome { trace, metrics, epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_scenario, synthetic_city, ScenarioSpec, ZoneId};
    use crate::objective::builtin;

    #[test]
    fn epochs() {
        assert_eq!(epoch_count(1200, 300), 4);
        assert_eq!(epoch_count(300, 300), 1);
        assert_eq!(epoch_count(301, 300), 2);
        assert_eq!(epoch_count(1, 300), 1);
    }

    #[test]
    fn single_co_located_passenger_waits_zero() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 300], vec![300, 0]]).unwrap();
        let sc = Scenario {
            spec: ScenarioSpec::new(1, 1, 300, 0).unwrap(),
            requests: vec![PassengerRequest {
                id: 0,
                origin: ZoneId(0),
                destination: ZoneId(1),
                request_time: 120,
            }],
            fleet: vec![crate::network::TaxiInit {
                id: 0,
                start_zone: ZoneId(0),
                available_at: 0,
            }],
            matrix_ref: String::new(),
        };
        let out = run_episode(&sc, &m, &DispatchConfig::default(), |_, _| builtin("distance").unwrap()).unwrap();
        assert_eq!(out.metrics.mean_wait_min, 0.0);
        assert_eq!(out.epochs, 1);
    }

    #[test]
    fn full_run_serves_everyone() {
        let (m, f) = synthetic_city(12, 3);
        let sc = generate_scenario(ScenarioSpec::new(40, 8, 1200, 5).unwrap(), &f, &m).unwrap();
        let mut calls = 0;
        let out = run_episode(&sc, &m, &DispatchConfig::default(), |_, _| {
            calls += 1;
            builtin("default_composite").unwrap()
        })
        .unwrap();
        assert_eq!(calls, 4);
        assert_eq!(out.metrics.per_passenger.len(), 40);
        assert_eq!(out.trace.events.len(), 80);
    }

    #[test]
    fn long_queues_are_split() {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 60], vec![60, 0]]).unwrap();
        let ps: Vec<_> = (0..23)
            .map(|i| PassengerRequest {
                id: i,
                origin: ZoneId(i % 2),
                destination: ZoneId(1 - i % 2),
                request_time: 10 * i as Seconds,
            })
            .collect();
        let veh = VehicleState {
            taxi: 0,
            zone: ZoneId(0),
            free_at: 0,
        };
        let r = sequence_taxi(&veh, &ps, &m).unwrap();
        assert_eq!(r.order.len(), 23);
        let (sched, w) = crate::sequence::route_times(&veh, &r.schedule.iter().map(|s| s.passenger).collect::<Vec<_>>(), &m);
        assert_eq!(sched, r.schedule);
        assert_eq!(w, r.total_wait);
    }
}
