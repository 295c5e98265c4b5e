#![allow(dead_code)]

use dispatch_core::network::{PassengerRequest, Seconds, TravelTimeMatrix, ZoneId};
use dispatch_core::sim::{DynContext, VehicleState};
use rand::Rng;

/// Random asymmetric matrix with zero diagonal and off-diagonal entries in
/// `1..=max`.
pub fn random_matrix<R: Rng>(rng: &mut R, zones: usize, max: Seconds) -> TravelTimeMatrix {
    let rows = (0..zones)
        .map(|i| {
            (0..zones)
                .map(|j| if i == j { 0 } else { rng.random_range(1..=max) })
                .collect()
        })
        .collect();
    TravelTimeMatrix::from_rows(rows).unwrap()
}

pub fn random_passengers<R: Rng>(rng: &mut R, zones: usize, n: usize, horizon: Seconds) -> Vec<PassengerRequest> {
    (0..n)
        .map(|id| {
            let o = rng.random_range(0..zones);
            let mut d = rng.random_range(0..zones - 1);
            if d >= o {
                d += 1;
            }
            PassengerRequest {
                id,
                origin: ZoneId(o),
                destination: ZoneId(d),
                request_time: rng.random_range(0..=horizon),
            }
        })
        .collect()
}

pub fn random_vehicles<R: Rng>(rng: &mut R, zones: usize, n: usize, horizon: Seconds) -> Vec<VehicleState> {
    (0..n)
        .map(|taxi| VehicleState {
            taxi,
            zone: ZoneId(rng.random_range(0..zones)),
            free_at: rng.random_range(0..=horizon),
        })
        .collect()
}

pub fn random_snapshot<R: Rng>(rng: &mut R, zones: usize, n_p: usize, n_v: usize, horizon: Seconds) -> DynContext {
    DynContext {
        clock: 0,
        vehicles: random_vehicles(rng, zones, n_v, horizon),
        passengers: random_passengers(rng, zones, n_p, horizon),
    }
}

/// Every map from `n_p` passengers to `n_v` taxis.
pub fn all_assignments(n_p: usize, n_v: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n_p {
        out = out
            .into_iter()
            .flat_map(|y| {
                (0..n_v).map(move |v| {
                    let mut y = y.clone();
                    y.push(v);
                    y
                })
            })
            .collect();
    }
    out
}

/// Total wait of serving `order` from `start`, stepping through each leg.
pub fn order_wait(matrix: &TravelTimeMatrix, start: &VehicleState, order: &[PassengerRequest]) -> Seconds {
    let (mut zone, mut t, mut wait) = (start.zone, start.free_at, 0);
    for p in order {
        t += matrix.tr(zone, p.origin);
        if t < p.request_time {
            t = p.request_time;
        }
        wait += t - p.request_time;
        t += matrix.tr(p.origin, p.destination);
        zone = p.destination;
    }
    wait
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}
