use dispatch_core::network::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn od_histogram_converges() {
    let (_, freq) = synthetic_city(9, 2);
    let sampler = OdSampler::new(&freq).unwrap();
    let n = sampler.zone_count();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 200_000;
    let mut hist = vec![0usize; n * n];
    for _ in 0..draws {
        let (o, d) = sampler.sample(&mut rng);
        assert_ne!(o, d);
        hist[o.index() * n + d.index()] += 1;
    }
    let target = freq.normalized();
    let l1: f64 = hist.iter().zip(&target).map(|(&h, &p)| (h as f64 / draws as f64 - p).abs()).sum();
    assert!(l1 < 0.02, "L1 = {l1}");
}

#[test]
fn scenarios_are_pure_in_their_seed() {
    let (m, f) = synthetic_city(10, 1);
    let spec = ScenarioSpec::new(50, 30, 300, 1).unwrap();
    let a = generate_scenario(spec, &f, &m).unwrap();
    assert_eq!(a.to_json(), generate_scenario(spec, &f, &m).unwrap().to_json());
    assert_ne!(a, generate_scenario(spec.with_seed(2), &f, &m).unwrap());
    assert_eq!(a.requests.len(), 50);
    a.validate(&m).unwrap();
    assert_eq!(Scenario::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn matrix_csv_round_trip() {
    let (m, _) = synthetic_city(7, 3);
    let back = TravelTimeMatrix::from_csv_reader(m.to_csv().as_bytes()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.digest(), m.digest());
}

proptest! {
    #[test]
    fn name_round_trip(p in 1usize..100_000, c in 1usize..100_000, t in 1u64..1_000_000) {
        let spec = ScenarioSpec::new(p, c, t, 0).unwrap();
        prop_assert_eq!(parse_scenario_name(&format_scenario_name(&spec)).unwrap(), spec);
    }

    #[test]
    fn requests_within_window(seed in 0u64..10_000, p in 1usize..60, t in 1u64..3600) {
        let (m, f) = synthetic_city(6, 0);
        let sc = generate_scenario(ScenarioSpec::new(p, 3, t, seed).unwrap(), &f, &m).unwrap();
        prop_assert!(sc.requests.iter().all(|r| r.request_time <= t && r.origin != r.destination));
        prop_assert!(sc.requests.windows(2).all(|w| w[0].request_time <= w[1].request_time));
    }
}
