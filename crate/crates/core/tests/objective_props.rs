mod common;

use common::*;
use dispatch_core::assign::Assignment;
use dispatch_core::generator::{extract_objective, find_json_objects};
use dispatch_core::objective::{
    builtin, evaluate, parse, parse_expr, validate, CostComponent, Expr, Feature, ObjectiveSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0..Feature::ALL.len()).prop_map(|i| Expr::Feature(Feature::ALL[i])),
        (-1000i32..1000).prop_map(|c| Expr::Const(c as f64 / 4.0)),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            ((-64i32..64).prop_filter("nonzero", |c| *c != 0), inner.clone())
                .prop_map(|(c, e)| Expr::scale(c as f64 / 8.0, e)),
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            inner.clone().prop_map(Expr::abs),
            inner.prop_map(Expr::relu),
        ]
    })
}

fn component() -> impl Strategy<Value = CostComponent> {
    prop_oneof![
        3 => expr().prop_map(CostComponent::PairLinear),
        1 => Just(CostComponent::LoadQuadratic),
        1 => Just(CostComponent::LoadDeviation),
        1 => Just(CostComponent::ChainQuadratic),
    ]
}

fn spec() -> impl Strategy<Value = ObjectiveSpec> {
    prop::collection::vec((component(), -100i32..100), 1..=5).prop_map(|cw| {
        let (components, weights): (Vec<_>, Vec<_>) = cw.into_iter().map(|(c, w)| (c, w as f64 / 4.0)).unzip();
        ObjectiveSpec::new(components, weights)
    })
}

/// Parses the printed form once so constant subtrees are folded.
fn normalize(spec: &ObjectiveSpec) -> ObjectiveSpec {
    parse(&spec.to_json()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn print_parse_is_identity_on_normalized(e in expr()) {
        let once = parse_expr(&e.to_string()).unwrap();
        let twice = parse_expr(&once.to_string()).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn spec_json_round_trip(s in spec()) {
        let n = normalize(&s);
        prop_assert_eq!(parse(&n.to_json()).unwrap(), n.clone());
        let via_serde: ObjectiveSpec = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
        prop_assert_eq!(via_serde, n);
    }

    #[test]
    fn extraction_total_on_arbitrary_text(text in ".{0,400}") {
        let _ = find_json_objects(&text);
        let _ = extract_objective(&text);
    }

    #[test]
    fn extraction_total_on_brace_soup(parts in prop::collection::vec(prop_oneof![
        Just("{".to_string()), Just("}".to_string()), Just("\"".to_string()), Just("\\".to_string()),
        Just("\"components\":".to_string()), Just("[".to_string()), Just("]".to_string()),
        "[a-z0-9 ,:]{0,6}",
    ], 0..80)) {
        let text = parts.concat();
        for span in find_json_objects(&text) {
            prop_assert!(span.starts_with('{') && span.ends_with('}'), "bad span {:?}", span);
        }
        let _ = extract_objective(&text);
    }

    #[test]
    fn valid_specs_survive_extraction(s in spec(), prefix in "[a-zA-Z .]{0,40}") {
        let n = normalize(&s);
        prop_assume!(validate(&n).is_empty());
        let text = format!("{prefix}\n{}\ntrailing", n.to_json());
        prop_assert_eq!(extract_objective(&text).unwrap(), n);
    }

    #[test]
    fn evaluate_is_affine_in_weights(s in spec(), w2 in prop::collection::vec(-100i32..100, 5), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 5, 900);
        let snap = random_snapshot(&mut rng, 5, 4, 3, 1200);
        let y = Assignment { taxi_of: vec![0, 2, 1, 2] };
        let mut other = s.clone();
        other.weights = w2[..s.weights.len()].iter().map(|&w| w as f64).collect();
        let mut sum = s.clone();
        sum.weights = s.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect();
        let (a, b, c) = (
            evaluate(&s, &y, &snap, &m).unwrap(),
            evaluate(&other, &y, &snap, &m).unwrap(),
            evaluate(&sum, &y, &snap, &m).unwrap(),
        );
        prop_assert!((a + b - c).abs() <= 1e-9 * (a.abs() + b.abs()).max(1.0) * 1e3, "{} + {} vs {}", a, b, c);
    }

    #[test]
    fn argmin_set_invariant_under_rescaling(seed in 0u64..1000, k in 1usize..4, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 4, 900);
        let snap = random_snapshot(&mut rng, 4, 4, 3, 1200);
        let s = builtin(["distance", "dist_util", "default_composite"][k - 1]).unwrap();
        let mut scaled = s.clone();
        scaled.weights.iter_mut().for_each(|w| *w *= scale);
        let argmins = |spec: &ObjectiveSpec| {
            let vals: Vec<f64> = all_assignments(4, 3)
                .into_iter()
                .map(|y| evaluate(spec, &Assignment { taxi_of: y }, &snap, &m).unwrap())
                .collect();
            let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            (0..vals.len()).filter(|&i| vals[i] <= best + 1e-9 * best.abs().max(1.0)).collect::<Vec<_>>()
        };
        prop_assert_eq!(argmins(&s), argmins(&scaled));
    }
}

#[test]
fn utilization_lower_bound_is_tight_only_when_balanced() {
    let util = builtin("utilization").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_matrix(&mut rng, 3, 900);
    for p in 1..=4 {
        for c in 1..=4 {
            let snap = random_snapshot(&mut rng, 3, p, c, 600);
            let bound = (p * p) as f64 / c as f64;
            for y in all_assignments(p, c) {
                let y = Assignment { taxi_of: y };
                let v = evaluate(&util, &y, &snap, &m).unwrap();
                let balanced = y.loads(c).iter().all(|&l| l * c == p);
                assert!(v >= bound - 1e-12, "P={p} C={c} {v} < {bound}");
                assert_eq!((v - bound).abs() < 1e-12, balanced, "P={p} C={c} loads {:?}", y.loads(c));
            }
        }
    }
}
