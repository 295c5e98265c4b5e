use thiserror::Error;

use super::{CostComponent, Expr, Feature, ObjectiveSpec};
use crate::assign::Assignment;
use crate::network::{PassengerRequest, TravelTimeMatrix, ZoneId};
use crate::sim::{DynContext, VehicleState};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("zone {0} is outside the travel-time matrix")]
    ZoneOutOfRange(ZoneId),
    #[error("assignment covers {found} passengers, snapshot has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("assignment references taxi slot {0} which does not exist")]
    TaxiOutOfRange(usize),
}

/// Value of one feature for the (vehicle, passenger) pair.
pub fn feature_value(
    feature: Feature,
    p: &PassengerRequest,
    v: &VehicleState,
    matrix: &TravelTimeMatrix,
    big_m: f64,
) -> f64 {
    match feature {
        Feature::TrOriginStart => matrix.tr(p.origin, v.zone) as f64,
        Feature::TrDestStart => matrix.tr(p.destination, v.zone) as f64,
        Feature::TrTrip => matrix.tr(p.origin, p.destination) as f64,
        Feature::TimeGap => p.request_time as f64 - v.free_at as f64,
        Feature::RequestTime => p.request_time as f64,
        Feature::AvailTime => v.free_at as f64,
        Feature::BigM => big_m,
    }
}

impl Expr {
    pub fn eval(&self, p: &PassengerRequest, v: &VehicleState, matrix: &TravelTimeMatrix, big_m: f64) -> f64 {
        match self {
            Expr::Feature(f) => feature_value(*f, p, v, matrix, big_m),
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.eval(p, v, matrix, big_m) + b.eval(p, v, matrix, big_m),
            Expr::Sub(a, b) => a.eval(p, v, matrix, big_m) - b.eval(p, v, matrix, big_m),
            Expr::Scale(c, e) => c * e.eval(p, v, matrix, big_m),
            Expr::Neg(e) => -e.eval(p, v, matrix, big_m),
            Expr::Abs(e) => e.eval(p, v, matrix, big_m).abs(),
            Expr::Relu(e) => e.eval(p, v, matrix, big_m).max(0.0),
        }
    }
}

pub(crate) fn check_inputs(y: &Assignment, snap: &DynContext, matrix: &TravelTimeMatrix) -> Result<(), EvalError> {
    snap.check_zones(matrix).map_err(EvalError::ZoneOutOfRange)?;
    if y.taxi_of.len() != snap.passengers.len() {
        return Err(EvalError::LengthMismatch {
            expected: snap.passengers.len(),
            found: y.taxi_of.len(),
        });
    }
    if let Some(&bad) = y.taxi_of.iter().find(|&&v| v >= snap.vehicles.len()) {
        return Err(EvalError::TaxiOutOfRange(bad));
    }
    Ok(())
}

/// Σ_i weights_i · component_i(y).
pub fn evaluate(
    spec: &ObjectiveSpec,
    y: &Assignment,
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
) -> Result<f64, EvalError> {
    check_inputs(y, snap, matrix)?;
    let loads = y.loads(snap.vehicles.len());
    let mut total = 0.0;
    for (c, &w) in spec.components.iter().zip(&spec.weights) {
        total += w * component_value(c, y, &loads, snap, matrix, spec.big_m);
    }
    Ok(total)
}

fn component_value(
    c: &CostComponent,
    y: &Assignment,
    loads: &[usize],
    snap: &DynContext,
    matrix: &TravelTimeMatrix,
    big_m: f64,
) -> f64 {
    match c {
        CostComponent::PairLinear(e) => snap
            .passengers
            .iter()
            .zip(&y.taxi_of)
            .map(|(p, &v)| e.eval(p, &snap.vehicles[v], matrix, big_m))
            .sum(),
        CostComponent::LoadQuadratic => loads.iter().map(|&l| (l * l) as f64).sum(),
        CostComponent::LoadDeviation => {
            // Σ (load − P/C)² computed as Σ (C·load − P)² / C² to stay exact
            let n_p = snap.passengers.len() as i128;
            let n_c = loads.len() as i128;
            let s: i128 = loads.iter().map(|&l| (n_c * l as i128 - n_p).pow(2)).sum();
            s as f64 / (n_c * n_c) as f64
        }
        CostComponent::ChainQuadratic => {
            let mut s: u64 = 0;
            for (i, (a, &va)) in snap.passengers.iter().zip(&y.taxi_of).enumerate() {
                for (j, (b, &vb)) in snap.passengers.iter().zip(&y.taxi_of).enumerate() {
                    if i != j && va == vb {
                        s += matrix.tr(a.destination, b.origin);
                    }
                }
            }
            s as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::builtin;

    fn snapshot() -> (DynContext, TravelTimeMatrix) {
        let m = TravelTimeMatrix::from_rows(vec![vec![0, 300], vec![300, 0]]).unwrap();
        let snap = DynContext {
            clock: 0,
            vehicles: vec![VehicleState {
                taxi: 0,
                zone: ZoneId(0),
                free_at: 0,
            }],
            passengers: vec![PassengerRequest {
                id: 0,
                origin: ZoneId(0),
                destination: ZoneId(1),
                request_time: 0,
            }],
        };
        (snap, m)
    }

    #[test]
    fn hand_values() {
        let (snap, m) = snapshot();
        let y = Assignment { taxi_of: vec![0] };
        let ev = |n: &str| evaluate(&builtin(n).unwrap(), &y, &snap, &m).unwrap();
        assert_eq!(ev("distance"), 300.0);
        assert_eq!(ev("temporal"), 0.0);
        assert_eq!(ev("utilization"), 1.0);
        assert_eq!(ev("default_composite"), 301.0);
    }

    #[test]
    fn zero_weights() {
        let (snap, m) = snapshot();
        let mut s = builtin("default_composite").unwrap();
        s.weights = vec![0.0; 3];
        assert_eq!(evaluate(&s, &Assignment { taxi_of: vec![0] }, &snap, &m).unwrap(), 0.0);
    }

    #[test]
    fn chain_needs_two_on_a_taxi() {
        let (mut snap, m) = snapshot();
        snap.vehicles.push(VehicleState {
            taxi: 1,
            zone: ZoneId(1),
            free_at: 0,
        });
        snap.passengers.push(PassengerRequest {
            id: 1,
            origin: ZoneId(1),
            destination: ZoneId(0),
            request_time: 0,
        });
        let s = ObjectiveSpec::new(vec![CostComponent::ChainQuadratic], vec![1.0]);
        assert_eq!(evaluate(&s, &Assignment { taxi_of: vec![0, 1] }, &snap, &m).unwrap(), 0.0);
        // D0=1 -> O1=1 is 0, D1=0 -> O0=0 is 0
        assert_eq!(evaluate(&s, &Assignment { taxi_of: vec![1, 1] }, &snap, &m).unwrap(), 0.0);
        snap.passengers[1].origin = ZoneId(0);
        snap.passengers[1].destination = ZoneId(1);
        assert_eq!(evaluate(&s, &Assignment { taxi_of: vec![0, 0] }, &snap, &m).unwrap(), 600.0);
    }

    #[test]
    fn deviation_is_exact() {
        let (mut snap, m) = snapshot();
        for id in 1..3 {
            snap.passengers.push(PassengerRequest { id, ..snap.passengers[0] });
        }
        snap.vehicles.push(VehicleState { taxi: 1, ..snap.vehicles[0] });
        let s = ObjectiveSpec::new(vec![CostComponent::LoadDeviation], vec![1.0]);
        // loads (3, 0), mean 1.5 -> 2.25 + 2.25
        assert_eq!(evaluate(&s, &Assignment { taxi_of: vec![0, 0, 0] }, &snap, &m).unwrap(), 4.5);
        assert_eq!(evaluate(&s, &Assignment { taxi_of: vec![0, 1, 0] }, &snap, &m).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        let (mut snap, m) = snapshot();
        let s = builtin("distance").unwrap();
        assert_eq!(
            evaluate(&s, &Assignment { taxi_of: vec![] }, &snap, &m),
            Err(EvalError::LengthMismatch { expected: 1, found: 0 })
        );
        assert_eq!(
            evaluate(&s, &Assignment { taxi_of: vec![3] }, &snap, &m),
            Err(EvalError::TaxiOutOfRange(3))
        );
        snap.vehicles[0].zone = ZoneId(9);
        assert_eq!(
            evaluate(&s, &Assignment { taxi_of: vec![0] }, &snap, &m),
            Err(EvalError::ZoneOutOfRange(ZoneId(9)))
        );
    }
}
