//! Second-level sequencing: order one taxi's passengers (pickup then dropoff,
//! one at a time) to minimize total waiting.
//!
//! Recurrence for consecutive services `prev → p`:
//!
//! ```text
//! AR_p  = finish_prev + TR(D_prev, O_p)      (first: free_at + TR(S, O_p))
//! DP_p  = max(AR_p, T_p)
//! ARd_p = DP_p + TR(O_p, D_p)
//! wait  = Σ (DP_p − T_p)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{PassengerRequest, Seconds, TravelTimeMatrix, ZoneId};
use crate::sim::{Task, VehicleState};

pub const SEQ_EXACT_LIMIT: usize = 10;
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SeqError {
    #[error("{count} passengers exceed the sequencing limit {limit}")]
    LimitExceeded { count: usize, limit: usize },
    #[error("zone {0} is outside the travel-time matrix")]
    ZoneOutOfRange(ZoneId),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub passenger: PassengerRequest,
    pub ar_pickup: Seconds,
    pub dp_pickup: Seconds,
    pub ar_dropoff: Seconds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub taxi: usize,
    /// Passenger ids in service order.
    pub order: Vec<usize>,
    pub schedule: Vec<Stop>,
    pub total_wait: Seconds,
}

impl Route {
    pub fn empty(taxi: usize) -> Self {
        Self {
            taxi,
            order: Vec::new(),
            schedule: Vec::new(),
            total_wait: 0,
        }
    }

    pub fn to_tasks(&self) -> Vec<Task> {
        self.schedule
            .iter()
            .map(|s| Task {
                passenger_id: s.passenger.id,
                origin: s.passenger.origin,
                destination: s.passenger.destination,
                taxi_arrival: s.ar_pickup,
                passenger_ready: s.passenger.request_time,
                depart: s.dp_pickup,
            })
            .collect()
    }

    /// Zone and time at which the taxi finishes this route.
    pub fn end(&self, start: &VehicleState) -> (ZoneId, Seconds) {
        self.schedule
            .last()
            .map(|s| (s.passenger.destination, s.ar_dropoff))
            .unwrap_or((start.zone, start.free_at))
    }
}

fn check_zones(taxi: &VehicleState, assigned: &[PassengerRequest], matrix: &TravelTimeMatrix) -> Result<(), SeqError> {
    if !matrix.contains(taxi.zone) {
        return Err(SeqError::ZoneOutOfRange(taxi.zone));
    }
    for p in assigned {
        for z in [p.origin, p.destination] {
            if !matrix.contains(z) {
                return Err(SeqError::ZoneOutOfRange(z));
            }
        }
    }
    Ok(())
}

/// Forward schedule of passengers served in the given order.
pub fn route_times(taxi: &VehicleState, order: &[PassengerRequest], matrix: &TravelTimeMatrix) -> (Vec<Stop>, Seconds) {
    let mut zone = taxi.zone;
    let mut t = taxi.free_at;
    let mut wait = 0;
    let mut stops = Vec::with_capacity(order.len());
    for p in order {
        let ar = t + matrix.tr(zone, p.origin);
        let dp = ar.max(p.request_time);
        let ard = dp + matrix.tr(p.origin, p.destination);
        wait += dp - p.request_time;
        stops.push(Stop {
            passenger: *p,
            ar_pickup: ar,
            dp_pickup: dp,
            ar_dropoff: ard,
        });
        zone = p.destination;
        t = ard;
    }
    (stops, wait)
}

fn build_route(taxi: &VehicleState, order: Vec<PassengerRequest>, matrix: &TravelTimeMatrix) -> Route {
    let (schedule, total_wait) = route_times(taxi, &order, matrix);
    Route {
        taxi: taxi.taxi,
        order: order.iter().map(|p| p.id).collect(),
        schedule,
        total_wait,
    }
}

fn sorted_by_id(assigned: &[PassengerRequest]) -> Vec<PassengerRequest> {
    let mut v = assigned.to_vec();
    v.sort_by_key(|p| p.id);
    v
}

#[derive(Copy, Clone, Debug)]
struct Label {
    wait: Seconds,
    finish: Seconds,
    /// Visit order packed 4 bits per position, first position most
    /// significant; labels in one bucket have equal length, so integer order
    /// is lexicographic order.
    path: u64,
}

impl Label {
    /// `self` makes `other` useless: every completion of `other` is matched
    /// by a completion of `self` that is no worse and lexicographically earlier.
    fn dominates(&self, other: &Label) -> bool {
        self.wait <= other.wait && self.finish <= other.finish && (self.wait < other.wait || self.path <= other.path)
    }
}

/// Exact minimum-wait order by subset DP over (visited set, last passenger).
/// Each state keeps the Pareto set of (wait, finish time) labels, since a
/// lower partial wait can come with a later finish. Ties go to the
/// lexicographically smallest id sequence.
pub fn solve_sequence(
    taxi: &VehicleState,
    assigned: &[PassengerRequest],
    matrix: &TravelTimeMatrix,
) -> Result<Route, SeqError> {
    if assigned.len() > SEQ_EXACT_LIMIT {
        return Err(SeqError::LimitExceeded {
            count: assigned.len(),
            limit: SEQ_EXACT_LIMIT,
        });
    }
    check_zones(taxi, assigned, matrix)?;
    let ps = sorted_by_id(assigned);
    let n = ps.len();
    if n == 0 {
        return Ok(Route::empty(taxi.taxi));
    }

    let service = |from_zone: ZoneId, t: Seconds, j: usize| {
        let p = &ps[j];
        let dp = (t + matrix.tr(from_zone, p.origin)).max(p.request_time);
        (dp - p.request_time, dp + matrix.tr(p.origin, p.destination))
    };

    let full = (1usize << n) - 1;
    let mut buckets: Vec<Vec<Label>> = vec![Vec::new(); (1 << n) * n];
    for j in 0..n {
        let (w, f) = service(taxi.zone, taxi.free_at, j);
        buckets[(1 << j) * n + j].push(Label {
            wait: w,
            finish: f,
            path: j as u64,
        });
    }
    for mask in 1..=full {
        for last in 0..n {
            if mask & (1 << last) == 0 {
                continue;
            }
            let labels = std::mem::take(&mut buckets[mask * n + last]);
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                let next = mask | (1 << j);
                for l in &labels {
                    let (w, f) = service(ps[last].destination, l.finish, j);
                    let cand = Label {
                        wait: l.wait + w,
                        finish: f,
                        path: (l.path << 4) | j as u64,
                    };
                    let bucket = &mut buckets[next * n + j];
                    if bucket.iter().any(|b| b.dominates(&cand)) {
                        continue;
                    }
                    bucket.retain(|b| !cand.dominates(b));
                    bucket.push(cand);
                }
            }
            buckets[mask * n + last] = labels;
        }
    }

    let best = (0..n)
        .flat_map(|last| buckets[full * n + last].iter())
        .min_by(|a, b| a.wait.cmp(&b.wait).then(a.path.cmp(&b.path)))
        .expect("full set has at least one label");
    let order: Vec<PassengerRequest> = (0..n)
        .rev()
        .map(|pos| ps[((best.path >> (4 * pos)) & 0xF) as usize])
        .collect();
    let route = build_route(taxi, order, matrix);
    debug_assert_eq!(route.total_wait, best.wait);
    Ok(route)
}

/// Full enumeration of orders; same tie-break as [`solve_sequence`].
pub fn brute_force_sequence(
    taxi: &VehicleState,
    assigned: &[PassengerRequest],
    matrix: &TravelTimeMatrix,
) -> Result<Route, SeqError> {
    if assigned.len() > BRUTE_FORCE_LIMIT {
        return Err(SeqError::LimitExceeded {
            count: assigned.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    check_zones(taxi, assigned, matrix)?;
    let ps = sorted_by_id(assigned);
    let mut perm: Vec<usize> = (0..ps.len()).collect();
    let mut best: Option<(Seconds, Vec<usize>)> = None;
    loop {
        let order: Vec<PassengerRequest> = perm.iter().map(|&i| ps[i]).collect();
        let (_, w) = route_times(taxi, &order, matrix);
        if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
            best = Some((w, perm.clone()));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (_, perm) = best.expect("at least the identity permutation");
    Ok(build_route(taxi, perm.iter().map(|&i| ps[i]).collect(), matrix))
}

fn next_permutation(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}
