//! Discrete-event fleet simulator.
//!
//! Each taxi heads toward one zone at a time (`heading`) and reaches it at
//! `arrive_at`. Arriving at the head task's origin fires a pickup (after
//! waiting for the passenger if early); arriving at its destination fires the
//! dropoff, pops the task, and sends the taxi toward the next origin straight
//! away. A taxi with an empty queue stays at its last destination. Time is
//! integer seconds; [`SimState::step`] jumps between arrivals but processes
//! exactly the instants a unit-tick loop would, in the same order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{delay, pickup_bin, Metrics, PassengerDelay};
use crate::network::{PassengerRequest, Scenario, Seconds, TravelTimeMatrix, ZoneId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("step length must be at least one second")]
    ZeroStep,
    #[error("passenger {0} appears more than once in the plan")]
    DuplicatePassenger(usize),
    #[error("passenger {0} is not pending")]
    NotPending(usize),
    #[error("plan references unknown taxi {0}")]
    UnknownTaxi(usize),
    #[error("task for passenger {0} is malformed: {1}")]
    BadTask(usize, String),
    #[error(
        "taxi {taxi} reached zone {heading} which is neither endpoint of its head task \
         (passenger {passenger})"
    )]
    Inconsistent {
        taxi: usize,
        heading: ZoneId,
        passenger: usize,
    },
    #[error("unserved passengers: {0:?}")]
    Unserved(Vec<usize>),
    #[error("fleet did not drain within {0} seconds")]
    DidNotDrain(Seconds),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// One passenger service: go to `origin`, wait for the passenger, drive to
/// `destination`. The planned times are carried for audit; the simulator
/// derives actual times from the automaton.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub passenger_id: usize,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub taxi_arrival: Seconds,
    pub passenger_ready: Seconds,
    pub depart: Seconds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxiRuntime {
    pub id: usize,
    pub heading: ZoneId,
    pub arrive_at: Seconds,
    pub queue: VecDeque<Task>,
    pub idle: bool,
    /// Pickup time of the head task once the passenger is on board.
    pub picked_up_at: Option<Seconds>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Pickup,
    Dropoff,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: Seconds,
    pub taxi: usize,
    #[serde(rename = "pass")]
    pub passenger: usize,
    pub kind: EventKind,
}

/// Next-free position and time of a taxi after its current queue.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleState {
    pub taxi: usize,
    pub zone: ZoneId,
    pub free_at: Seconds,
}

/// Dispatcher view of the system at one instant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynContext {
    pub clock: Seconds,
    pub vehicles: Vec<VehicleState>,
    /// Pending requests, ordered by id.
    pub passengers: Vec<PassengerRequest>,
}

impl DynContext {
    /// Keeps only passengers with `request_time < cutoff`.
    pub fn released_before(mut self, cutoff: Seconds) -> Self {
        self.passengers.retain(|p| p.request_time < cutoff);
        self
    }

    pub fn check_zones(&self, matrix: &TravelTimeMatrix) -> std::result::Result<(), ZoneId> {
        for v in &self.vehicles {
            if !matrix.contains(v.zone) {
                return Err(v.zone);
            }
        }
        for p in &self.passengers {
            for z in [p.origin, p.destination] {
                if !matrix.contains(z) {
                    return Err(z);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub clock: Seconds,
    pub taxis: Vec<TaxiRuntime>,
    pub pending: BTreeMap<usize, PassengerRequest>,
    /// passenger -> (pickup, dropoff)
    pub served: BTreeMap<usize, (Seconds, Seconds)>,
    pub requests: Vec<PassengerRequest>,
}

impl SimState {
    pub fn init(scenario: &Scenario) -> Self {
        let taxis = scenario
            .fleet
            .iter()
            .map(|t| TaxiRuntime {
                id: t.id,
                heading: t.start_zone,
                arrive_at: t.available_at,
                queue: VecDeque::new(),
                idle: true,
                picked_up_at: None,
            })
            .collect();
        Self {
            clock: 0,
            taxis,
            pending: scenario.requests.iter().map(|r| (r.id, *r)).collect(),
            served: BTreeMap::new(),
            requests: scenario.requests.clone(),
        }
    }

    pub fn all_idle(&self) -> bool {
        self.taxis.iter().all(|t| t.queue.is_empty())
    }

    pub fn queued_tasks(&self) -> usize {
        self.taxis.iter().map(|t| t.queue.len()).sum()
    }

    /// Advances the clock by `dt`, processing every arrival at instants in
    /// `[clock, clock + dt)`. Returned events are ordered by (time, taxi).
    pub fn step(&mut self, dt: Seconds, matrix: &TravelTimeMatrix) -> Result<Vec<SimEvent>> {
        if dt == 0 {
            return Err(SimError::ZeroStep);
        }
        let end = self.clock + dt;
        let mut events = Vec::new();
        for taxi in &mut self.taxis {
            advance_taxi(taxi, end, matrix, &mut self.served, &mut events)?;
        }
        events.sort_by_key(|e| e.t);
        self.clock = end;
        Ok(events)
    }

    /// Appends per-taxi task lists. Idle taxis start toward the first origin
    /// at the current clock; busy taxis keep their in-flight task.
    pub fn merge_commands(
        &mut self,
        plan: &BTreeMap<usize, Vec<Task>>,
        matrix: &TravelTimeMatrix,
    ) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (&taxi, tasks) in plan {
            if taxi >= self.taxis.len() {
                return Err(SimError::UnknownTaxi(taxi));
            }
            for task in tasks {
                let pid = task.passenger_id;
                if !seen.insert(pid) {
                    return Err(SimError::DuplicatePassenger(pid));
                }
                let Some(req) = self.pending.get(&pid) else {
                    return Err(SimError::NotPending(pid));
                };
                if task.origin != req.origin || task.destination != req.destination {
                    return Err(SimError::BadTask(pid, "endpoints differ from request".into()));
                }
                if !matrix.contains(task.origin) || !matrix.contains(task.destination) {
                    return Err(SimError::BadTask(pid, "zone outside matrix".into()));
                }
                if task.origin == task.destination {
                    return Err(SimError::BadTask(pid, "origin equals destination".into()));
                }
            }
        }

        for (&taxi_id, tasks) in plan {
            if tasks.is_empty() {
                continue;
            }
            let taxi = &mut self.taxis[taxi_id];
            if taxi.queue.is_empty() {
                let first = tasks[0];
                taxi.arrive_at = self.clock + matrix.tr(taxi.heading, first.origin);
                taxi.heading = first.origin;
                taxi.idle = false;
                taxi.picked_up_at = None;
            }
            taxi.queue.extend(tasks.iter().copied());
            for t in tasks {
                self.pending.remove(&t.passenger_id);
            }
        }
        Ok(())
    }

    /// Next-free zone and time for every taxi plus all pending requests.
    pub fn snapshot(&self, matrix: &TravelTimeMatrix) -> DynContext {
        let vehicles = self
            .taxis
            .iter()
            .map(|t| {
                let (zone, free_at) = next_free(t, self.clock, matrix);
                VehicleState {
                    taxi: t.id,
                    zone,
                    free_at,
                }
            })
            .collect();
        DynContext {
            clock: self.clock,
            vehicles,
            passengers: self.pending.values().copied().collect(),
        }
    }
}

fn advance_taxi(
    taxi: &mut TaxiRuntime,
    end: Seconds,
    matrix: &TravelTimeMatrix,
    served: &mut BTreeMap<usize, (Seconds, Seconds)>,
    events: &mut Vec<SimEvent>,
) -> Result<()> {
    loop {
        let Some(head) = taxi.queue.front().copied() else {
            taxi.idle = true;
            return Ok(());
        };
        if taxi.arrive_at >= end {
            return Ok(());
        }
        let k = taxi.arrive_at;
        match taxi.picked_up_at {
            None if taxi.heading == head.origin => {
                if k < head.passenger_ready {
                    taxi.arrive_at = head.passenger_ready;
                    continue;
                }
                events.push(SimEvent {
                    t: k,
                    taxi: taxi.id,
                    passenger: head.passenger_id,
                    kind: EventKind::Pickup,
                });
                taxi.picked_up_at = Some(k);
                taxi.heading = head.destination;
                taxi.arrive_at = k + matrix.tr(head.origin, head.destination);
            }
            Some(pickup) if taxi.heading == head.destination => {
                events.push(SimEvent {
                    t: k,
                    taxi: taxi.id,
                    passenger: head.passenger_id,
                    kind: EventKind::Dropoff,
                });
                served.insert(head.passenger_id, (pickup, k));
                taxi.queue.pop_front();
                taxi.picked_up_at = None;
                match taxi.queue.front() {
                    Some(next) => {
                        taxi.arrive_at = k + matrix.tr(head.destination, next.origin);
                        taxi.heading = next.origin;
                    }
                    None => {
                        taxi.idle = true;
                        return Ok(());
                    }
                }
            }
            _ => {
                return Err(SimError::Inconsistent {
                    taxi: taxi.id,
                    heading: taxi.heading,
                    passenger: head.passenger_id,
                })
            }
        }
    }
}

/// Forward-simulates the remaining queue without mutating the taxi.
fn next_free(taxi: &TaxiRuntime, clock: Seconds, matrix: &TravelTimeMatrix) -> (ZoneId, Seconds) {
    let mut tasks = taxi.queue.iter();
    let Some(head) = tasks.next() else {
        return (taxi.heading, clock);
    };
    let mut t = match taxi.picked_up_at {
        Some(_) => taxi.arrive_at,
        None => taxi.arrive_at.max(head.passenger_ready) + matrix.tr(head.origin, head.destination),
    };
    let mut zone = head.destination;
    for task in tasks {
        let arrive = t + matrix.tr(zone, task.origin);
        t = arrive.max(task.passenger_ready) + matrix.tr(task.origin, task.destination);
        zone = task.destination;
    }
    (zone, t)
}

/// Owns a state plus the event log of a run.
#[derive(Clone, Debug)]
pub struct Simulation<'m> {
    pub state: SimState,
    pub events: Vec<SimEvent>,
    matrix: &'m TravelTimeMatrix,
    scenario: String,
}

impl<'m> Simulation<'m> {
    pub fn new(scenario: &Scenario, matrix: &'m TravelTimeMatrix) -> Self {
        Self {
            state: SimState::init(scenario),
            events: Vec::new(),
            matrix,
            scenario: scenario.name(),
        }
    }

    pub fn matrix(&self) -> &'m TravelTimeMatrix {
        self.matrix
    }

    pub fn step(&mut self, dt: Seconds) -> Result<()> {
        let ev = self.state.step(dt, self.matrix)?;
        self.events.extend(ev);
        Ok(())
    }

    pub fn merge_commands(&mut self, plan: &BTreeMap<usize, Vec<Task>>) -> Result<()> {
        self.state.merge_commands(plan, self.matrix)
    }

    pub fn snapshot(&self) -> DynContext {
        self.state.snapshot(self.matrix)
    }

    /// Steps in `dt` chunks until every queue is empty.
    pub fn run_until_idle(&mut self, dt: Seconds, max_horizon: Seconds) -> Result<()> {
        let limit = self.state.clock + max_horizon;
        while !self.state.all_idle() {
            if self.state.clock >= limit {
                return Err(SimError::DidNotDrain(max_horizon));
            }
            self.step(dt)?;
        }
        Ok(())
    }

    pub fn into_trace(self) -> SimTrace {
        SimTrace {
            scenario: self.scenario,
            events: self.events,
            final_state: self.state,
        }
    }
}

/// Executed timeline of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub scenario: String,
    pub events: Vec<SimEvent>,
    pub final_state: SimState,
}

impl SimTrace {
    /// One JSON object per line: `{"t":..,"taxi":..,"pass":..,"kind":..}`.
    pub fn events_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("event serializes"));
            s.push('\n');
        }
        s
    }
}

/// Per-passenger delay, mean wait and the (origin zone, pickup slot) heatmap.
pub fn collect_metrics(trace: &SimTrace, bin_seconds: Seconds, zone_count: usize) -> Result<Metrics> {
    assert!(bin_seconds > 0, "bin width must be positive");
    let state = &trace.final_state;
    let unserved: Vec<usize> = state
        .requests
        .iter()
        .filter(|r| !state.served.contains_key(&r.id))
        .map(|r| r.id)
        .collect();
    if !unserved.is_empty() {
        return Err(SimError::Unserved(unserved));
    }
    let mut per = Vec::with_capacity(state.requests.len());
    for r in &state.requests {
        if r.origin.index() >= zone_count {
            return Err(SimError::BadTask(r.id, "origin outside zone range".into()));
        }
        let (pickup, _) = state.served[&r.id];
        per.push(PassengerDelay {
            id: r.id,
            delay_s: delay(pickup, r.request_time),
            origin: r.origin,
            bin: pickup_bin(pickup, bin_seconds),
        });
    }
    Ok(Metrics::from_delays(per, bin_seconds).with_labels(trace.scenario.clone(), String::new()))
}
