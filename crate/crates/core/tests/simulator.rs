use std::collections::BTreeMap;

use dispatch_core::dispatch::{plan_epoch, run_episode, DispatchConfig};
use dispatch_core::network::{generate_scenario, synthetic_city, Scenario, ScenarioSpec, Seconds, TravelTimeMatrix};
use dispatch_core::objective::builtin;
use dispatch_core::sequence::solve_sequence;
use dispatch_core::sim::{EventKind, SimEvent, SimState, Simulation};
use proptest::prelude::*;

fn scenario(p: usize, c: usize, t: Seconds, seed: u64) -> (Scenario, TravelTimeMatrix) {
    let (m, f) = synthetic_city(12, seed);
    (generate_scenario(ScenarioSpec::new(p, c, t, seed).unwrap(), &f, &m).unwrap(), m)
}

/// Merges one plan per epoch like the dispatcher does and records the pickup
/// time each route promised.
fn planned_run(sc: &Scenario, m: &TravelTimeMatrix, dt: Seconds) -> (Vec<SimEvent>, BTreeMap<usize, Seconds>) {
    let cfg = DispatchConfig { dt, ..DispatchConfig::default() };
    let spec = builtin("default_composite").unwrap();
    let mut sim = Simulation::new(sc, m);
    let mut promised = BTreeMap::new();
    let epochs = sc.spec.window.div_ceil(dt);
    for e in 0..epochs {
        let mut ctx = sim.snapshot();
        if e + 1 < epochs {
            ctx = ctx.released_before((e + 1) * dt);
        }
        if !ctx.passengers.is_empty() {
            let heads: Vec<_> = sim.state.taxis.iter().map(|t| (t.queue.front().copied(), t.picked_up_at)).collect();
            let plan = plan_epoch(&spec, &ctx, m, &cfg).unwrap();
            for r in &plan.routes {
                for s in &r.schedule {
                    promised.insert(s.passenger.id, s.dp_pickup);
                }
            }
            sim.merge_commands(&plan.plan).unwrap();
            for (t, (head, picked)) in sim.state.taxis.iter().zip(heads) {
                if head.is_some() {
                    assert_eq!(t.queue.front().copied(), head, "in-flight head replaced");
                    assert_eq!(t.picked_up_at, picked);
                }
            }
        }
        sim.step(dt).unwrap();
    }
    sim.run_until_idle(dt, 1_000_000).unwrap();
    (sim.events, promised)
}

#[test]
fn conservation_over_full_runs() {
    for seed in 0..50 {
        let (sc, m) = scenario(30, 6, 1200, seed);
        let out = run_episode(&sc, &m, &DispatchConfig::default(), |_, _| builtin("default_composite").unwrap()).unwrap();
        let mut pick = BTreeMap::new();
        let mut drop = BTreeMap::new();
        let mut last = 0;
        for e in &out.trace.events {
            assert!(e.t >= last, "events out of order");
            last = e.t;
            let slot = match e.kind {
                EventKind::Pickup => &mut pick,
                EventKind::Dropoff => &mut drop,
            };
            assert!(slot.insert(e.passenger, e.t).is_none(), "duplicate event for {}", e.passenger);
        }
        for r in &sc.requests {
            let (p, d) = (pick[&r.id], drop[&r.id]);
            assert!(p >= r.request_time);
            assert_eq!(d - p, m.tr(r.origin, r.destination));
        }
        assert_eq!(pick.len(), sc.requests.len());
        assert_eq!(drop.len(), sc.requests.len());
        let counted: usize = out.metrics.heatmap.iter().map(|c| c.count).sum();
        assert_eq!(counted, sc.requests.len());
    }
}

#[test]
fn executed_pickups_match_routes() {
    for seed in 0..100 {
        let (sc, m) = scenario(6, 1, 600, 1000 + seed);
        let mut sim = Simulation::new(&sc, &m);
        let ctx = sim.snapshot();
        let route = solve_sequence(&ctx.vehicles[0], &ctx.passengers, &m).unwrap();
        sim.merge_commands(&BTreeMap::from([(0, route.to_tasks())])).unwrap();
        sim.run_until_idle(60, 1_000_000).unwrap();
        for s in &route.schedule {
            let ev = sim
                .events
                .iter()
                .find(|e| e.passenger == s.passenger.id && e.kind == EventKind::Pickup)
                .unwrap();
            assert_eq!(ev.t, s.dp_pickup);
        }
    }
}

#[test]
fn multi_epoch_pickups_match_plans() {
    for seed in 0..20 {
        let (sc, m) = scenario(40, 5, 1200, 2000 + seed);
        let (events, promised) = planned_run(&sc, &m, 300);
        assert_eq!(promised.len(), 40);
        for e in events.iter().filter(|e| e.kind == EventKind::Pickup) {
            assert_eq!(e.t, promised[&e.passenger], "passenger {}", e.passenger);
        }
    }
}

fn loaded_state(seed: u64) -> (SimState, TravelTimeMatrix) {
    let (sc, m) = scenario(12, 3, 600, seed);
    let sim = Simulation::new(&sc, &m);
    let ctx = sim.snapshot();
    let plan = plan_epoch(&builtin("distance").unwrap(), &ctx, &m, &DispatchConfig::default()).unwrap();
    let mut state = sim.state.clone();
    state.merge_commands(&plan.plan, &m).unwrap();
    (state, m)
}

proptest! {
    #[test]
    fn steps_compose(seed in 0u64..500, a in 1u64..900, b in 1u64..900) {
        let (s0, m) = loaded_state(seed);
        let mut split = s0.clone();
        let mut ev = split.step(a, &m).unwrap();
        ev.extend(split.step(b, &m).unwrap());
        let mut whole = s0;
        let ev_whole = whole.step(a + b, &m).unwrap();
        prop_assert_eq!(split, whole);
        prop_assert_eq!(ev, ev_whole);
    }

    #[test]
    fn unit_ticks_match_jumps(seed in 0u64..200, n in 1u64..3000) {
        let (s0, m) = loaded_state(seed);
        let mut ticked = s0.clone();
        let mut ev = Vec::new();
        for _ in 0..n {
            ev.extend(ticked.step(1, &m).unwrap());
        }
        let mut jumped = s0;
        let ev_jump = jumped.step(n, &m).unwrap();
        prop_assert_eq!(ticked, jumped);
        prop_assert_eq!(ev, ev_jump);
    }
}
