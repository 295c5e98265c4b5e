use super::{CostComponent, Expr, Feature, ObjectiveError, ObjectiveSpec};

pub const BUILTIN_NAMES: [&str; 6] = [
    "distance",
    "temporal",
    "utilization",
    "dist_util",
    "temp_util",
    "default_composite",
];

fn distance() -> CostComponent {
    CostComponent::PairLinear(Expr::add(
        Expr::Feature(Feature::TrOriginStart),
        Expr::Feature(Feature::TrDestStart),
    ))
}

fn temporal() -> CostComponent {
    CostComponent::PairLinear(Expr::abs(Expr::Feature(Feature::TimeGap)))
}

/// Manual objectives. Composites combine their parts with unit weights.
pub fn builtin(name: &str) -> Result<ObjectiveSpec, ObjectiveError> {
    let components = match name {
        "distance" => vec![distance()],
        "temporal" => vec![temporal()],
        "utilization" => vec![CostComponent::LoadQuadratic],
        "dist_util" => vec![distance(), CostComponent::LoadQuadratic],
        "temp_util" => vec![temporal(), CostComponent::LoadQuadratic],
        "default_composite" => vec![distance(), temporal(), CostComponent::LoadQuadratic],
        other => return Err(ObjectiveError::UnknownBuiltin(other.to_string())),
    };
    let weights = vec![1.0; components.len()];
    Ok(ObjectiveSpec::new(components, weights))
}
