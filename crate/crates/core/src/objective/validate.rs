use std::fmt;

use super::{CostComponent, Expr, Feature, ObjectiveSpec};

pub const MAX_COMPONENTS: usize = 5;
pub const MAX_DEPTH: usize = 8;
pub const MAX_COEFF: f64 = 1e9;

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ComponentCount(usize),
    WeightCount { components: usize, weights: usize },
    NonFiniteWeight { index: usize },
    WeightTooLarge { index: usize, value: f64 },
    TooDeep { component: usize, depth: usize },
    BigMNested { component: usize },
    CoefficientTooLarge { component: usize, value: f64 },
    BadBigM(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ComponentCount(n) => write!(f, "{n} components (allowed 1-{MAX_COMPONENTS})"),
            Violation::WeightCount { components, weights } => {
                write!(f, "{weights} weights for {components} components")
            }
            Violation::NonFiniteWeight { index } => write!(f, "weight {index} is not finite"),
            Violation::WeightTooLarge { index, value } => {
                write!(f, "weight {index} = {value} exceeds {MAX_COEFF:e} in magnitude")
            }
            Violation::TooDeep { component, depth } => {
                write!(f, "component {component} has depth {depth} (max {MAX_DEPTH})")
            }
            Violation::BigMNested { component } => {
                write!(f, "component {component} nests big_m under more than one abs/relu")
            }
            Violation::CoefficientTooLarge { component, value } => {
                write!(f, "component {component} has coefficient {value} exceeding {MAX_COEFF:e}")
            }
            Violation::BadBigM(m) => write!(f, "big_m = {m} must be finite and positive"),
        }
    }
}

/// Collects every restriction violation; an empty list means the spec is usable.
pub fn validate(spec: &ObjectiveSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = spec.components.len();
    if n == 0 || n > MAX_COMPONENTS {
        out.push(Violation::ComponentCount(n));
    }
    if spec.weights.len() != n {
        out.push(Violation::WeightCount {
            components: n,
            weights: spec.weights.len(),
        });
    }
    for (index, &w) in spec.weights.iter().enumerate() {
        if !w.is_finite() {
            out.push(Violation::NonFiniteWeight { index });
        } else if w.abs() > MAX_COEFF {
            out.push(Violation::WeightTooLarge { index, value: w });
        }
    }
    if !(spec.big_m.is_finite() && spec.big_m > 0.0) {
        out.push(Violation::BadBigM(spec.big_m));
    }
    for (component, c) in spec.components.iter().enumerate() {
        let CostComponent::PairLinear(e) = c else { continue };
        let depth = e.depth();
        if depth > MAX_DEPTH {
            out.push(Violation::TooDeep { component, depth });
        }
        if big_m_nesting(e, 0) > 1 {
            out.push(Violation::BigMNested { component });
        }
        let mut worst: Option<f64> = None;
        e.walk(&mut |node| {
            let c = match node {
                Expr::Const(c) | Expr::Scale(c, _) => *c,
                _ => return,
            };
            if !c.is_finite() || c.abs() > MAX_COEFF {
                worst.get_or_insert(c);
            }
        });
        if let Some(value) = worst {
            out.push(Violation::CoefficientTooLarge { component, value });
        }
    }
    out
}

/// Deepest abs/relu nesting above any big_m leaf.
fn big_m_nesting(e: &Expr, level: usize) -> usize {
    match e {
        Expr::Feature(Feature::BigM) => level,
        Expr::Feature(_) | Expr::Const(_) => 0,
        Expr::Add(a, b) | Expr::Sub(a, b) => big_m_nesting(a, level).max(big_m_nesting(b, level)),
        Expr::Scale(_, x) | Expr::Neg(x) => big_m_nesting(x, level),
        Expr::Abs(x) | Expr::Relu(x) => big_m_nesting(x, level + 1),
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ObjectiveClass {
    Linear,
    ConvexLoad,
    GeneralQuadratic,
}

/// Solver dispatch class. A load term with a negative weight is concave in
/// the loads, so it is routed to the general solver.
pub fn classify(spec: &ObjectiveSpec) -> ObjectiveClass {
    let mut class = ObjectiveClass::Linear;
    for (c, &w) in spec.components.iter().zip(&spec.weights) {
        match c {
            CostComponent::PairLinear(_) => {}
            CostComponent::LoadQuadratic | CostComponent::LoadDeviation => {
                if w < 0.0 {
                    return ObjectiveClass::GeneralQuadratic;
                }
                class = ObjectiveClass::ConvexLoad;
            }
            CostComponent::ChainQuadratic => return ObjectiveClass::GeneralQuadratic,
        }
    }
    class
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{builtin, parse_expr};

    fn pair(expr: &str) -> ObjectiveSpec {
        ObjectiveSpec::new(vec![CostComponent::PairLinear(parse_expr(expr).unwrap())], vec![1.0])
    }

    #[test]
    fn builtins_are_valid() {
        for name in crate::objective::BUILTIN_NAMES {
            assert!(validate(&builtin(name).unwrap()).is_empty(), "{name}");
        }
    }

    #[test]
    fn infinite_weight() {
        let mut s = builtin("distance").unwrap();
        s.weights[0] = f64::INFINITY;
        assert_eq!(validate(&s), vec![Violation::NonFiniteWeight { index: 0 }]);
    }

    #[test]
    fn depth_limit() {
        // abs^7(TR_trip) has depth 8, one more wrapper makes 9
        let ok = format!("{}TR_trip{}", "abs(".repeat(7), ")".repeat(7));
        assert!(validate(&pair(&ok)).is_empty());
        let deep = format!("{}TR_trip{}", "abs(".repeat(8), ")".repeat(8));
        assert_eq!(
            validate(&pair(&deep)),
            vec![Violation::TooDeep { component: 0, depth: 9 }]
        );
    }

    #[test]
    fn big_m_nesting_rule() {
        assert!(validate(&pair("big_m")).is_empty());
        assert!(validate(&pair("relu(big_m - TR_trip)")).is_empty());
        assert_eq!(
            validate(&pair("abs(relu(big_m - TR_trip))")),
            vec![Violation::BigMNested { component: 0 }]
        );
    }

    #[test]
    fn coefficient_bound() {
        assert!(validate(&pair("1e9 * TR_trip")).is_empty());
        assert_eq!(validate(&pair("2e9 * TR_trip")).len(), 1);
        assert_eq!(validate(&pair("TR_trip + 5e10")).len(), 1);
    }

    #[test]
    fn structural_violations_reported_together() {
        let s = ObjectiveSpec::new(vec![], vec![1.0]);
        let v = validate(&s);
        assert!(v.contains(&Violation::ComponentCount(0)));
        assert!(v.contains(&Violation::WeightCount {
            components: 0,
            weights: 1
        }));
    }

    #[test]
    fn classes() {
        assert_eq!(classify(&builtin("distance").unwrap()), ObjectiveClass::Linear);
        assert_eq!(classify(&builtin("default_composite").unwrap()), ObjectiveClass::ConvexLoad);
        let mut s = builtin("distance").unwrap();
        s.components.push(CostComponent::ChainQuadratic);
        s.weights.push(1.0);
        assert_eq!(classify(&s), ObjectiveClass::GeneralQuadratic);
        let mut neg = builtin("utilization").unwrap();
        neg.weights[0] = -1.0;
        assert_eq!(classify(&neg), ObjectiveClass::GeneralQuadratic);
    }
}
