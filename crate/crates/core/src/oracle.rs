//! Joint assignment + sequencing optimum for tiny instances, by enumerating
//! every passenger-to-taxi map and sequencing each taxi exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::Assignment;
use crate::exec::Execution;
use crate::network::{Seconds, TravelTimeMatrix};
use crate::sequence::{solve_sequence, Route, SeqError};
use crate::sim::DynContext;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_passengers: usize,
    pub max_vehicles: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_passengers: 5,
            max_vehicles: 3,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance has {passengers} passengers and {vehicles} taxis; limits are {max_passengers} and {max_vehicles}")]
    TooLarge {
        passengers: usize,
        vehicles: usize,
        max_passengers: usize,
        max_vehicles: usize,
    },
    #[error("snapshot has no taxis")]
    NoTaxis,
    #[error(transparent)]
    Seq(#[from] SeqError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolisticSolution {
    pub assignment: Vec<usize>,
    /// One route per vehicle slot.
    pub routes: Vec<Route>,
    pub total_wait: Seconds,
}

/// Decodes `code` with passenger 0 as the most significant base-`v` digit,
/// so increasing codes visit assignments in lexicographic order.
fn decode(mut code: usize, n_p: usize, n_v: usize) -> Vec<usize> {
    let mut y = vec![0; n_p];
    for slot in y.iter_mut().rev() {
        *slot = code % n_v;
        code /= n_v;
    }
    y
}

fn routes_for(y: &[usize], snap: &DynContext, matrix: &TravelTimeMatrix) -> Result<Vec<Route>, SeqError> {
    let groups = Assignment { taxi_of: y.to_vec() }.groups(snap.vehicles.len());
    groups
        .iter()
        .zip(&snap.vehicles)
        .map(|(g, veh)| {
            let ps: Vec<_> = g.iter().map(|&i| snap.passengers[i]).collect();
            solve_sequence(veh, &ps, matrix)
        })
        .collect()
}

pub fn solve_holistic(
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
    limits: OracleLimits,
    exec: Execution,
) -> Result<HolisticSolution, OracleError> {
    let (n_p, n_v) = (snap.passengers.len(), snap.vehicles.len());
    if n_v == 0 {
        return Err(OracleError::NoTaxis);
    }
    if n_p > limits.max_passengers || n_v > limits.max_vehicles {
        return Err(OracleError::TooLarge {
            passengers: n_p,
            vehicles: n_v,
            max_passengers: limits.max_passengers,
            max_vehicles: limits.max_vehicles,
        });
    }
    let total = n_v.pow(n_p as u32);
    let values = exec.map_range(total, |code| {
        let y = decode(code, n_p, n_v);
        routes_for(&y, snap, matrix).map(|rs| rs.iter().map(|r| r.total_wait).sum::<Seconds>())
    });
    let mut best: Option<(Seconds, usize)> = None;
    for (code, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(bv, _)| v < bv) {
            best = Some((v, code));
        }
    }
    let (total_wait, code) = best.expect("at least one assignment");
    let assignment = decode(code, n_p, n_v);
    let routes = routes_for(&assignment, snap, matrix)?;
    Ok(HolisticSolution {
        assignment,
        routes,
        total_wait,
    })
}
