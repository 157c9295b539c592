use nmq_puf::dataset::sample_challenges;
use nmq_puf::entropy::{EnvironmentCondition, InstanceConfig, NoiseModel};
use nmq_puf::metrics::{
    auth_failure_probability, bit_error_rate, exact_failure_probability, hamming_groups,
    margin_threshold, monte_carlo_failure, required_crps, uniformity, uniformity_of, uniqueness,
    ResponseSet,
};
use nmq_puf::puf::Architecture;
use proptest::prelude::*;

/// Binomial tail by direct multiplication of probabilities (no logs).
fn naive_tail(ber: f64, n: u64, threshold: u64) -> f64 {
    let p = 1.0 - ber;
    let mut term = ber.powi(n as i32); // P(k = 0)
    let mut total = 0.0;
    for k in 0..threshold.min(n + 1) {
        total += term;
        term *= (n - k) as f64 / (k + 1) as f64 * p / ber;
    }
    total
}

#[test]
fn exact_tail_matches_naive_summation() {
    for (ber, n, t) in [
        (0.1, 200, 170),
        (0.2, 50, 30),
        (0.3, 400, 260),
        (0.05, 10, 10),
    ] {
        let a = exact_failure_probability(ber, n, t);
        let b = naive_tail(ber, n, t);
        assert!(
            (a - b).abs() <= 1e-10 * b.max(1e-300),
            "{ber} {n} {t}: {a} vs {b}"
        );
    }
}

#[test]
fn monte_carlo_within_three_standard_errors() {
    for ber in [0.1, 0.2, 0.3] {
        let n = 300;
        let t = margin_threshold(ber, n);
        let exact = exact_failure_probability(ber, n, t);
        let mc = monte_carlo_failure(ber, n, t, 1_000_000, 17);
        let se = (exact * (1.0 - exact) / 1e6).sqrt();
        assert!(
            (mc.probability - exact).abs() <= 3.0 * se,
            "{ber}: {} vs {exact}",
            mc.probability
        );
    }
}

#[test]
fn degenerate_authentication_inputs() {
    assert_eq!(exact_failure_probability(0.0, 200, 170), 0.0);
    assert_eq!(exact_failure_probability(1.0, 200, 170), 1.0);
    assert_eq!(exact_failure_probability(0.3, 200, 0), 0.0);
    assert!(auth_failure_probability(1.5, 200, 170, 10, 1).is_err());
    assert!(auth_failure_probability(0.1, 200, 201, 10, 1).is_err());
    assert_eq!(monte_carlo_failure(1.0, 10, 1, 1000, 1).failures, 1000);
}

#[test]
fn required_crps_grows_with_ber() {
    let counts: Vec<u64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&b| required_crps(b, 0.01, 1000).unwrap())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
}

#[test]
fn all_zero_responses_have_zero_uniformity() {
    assert_eq!(uniformity_of(&[false; 100]).unwrap(), 0.0);
    assert_eq!(uniformity_of(&[true; 7]).unwrap(), 1.0);
    assert!(uniformity_of(&[]).is_err());
}

#[test]
fn hamming_groups_by_hand() {
    let a = [true, true, false, false, true, false];
    let b = [true, false, false, true, true, true];
    assert_eq!(
        hamming_groups(&a, &b, 3).unwrap(),
        vec![1.0 / 3.0, 2.0 / 3.0]
    );
    assert!(hamming_groups(&a, &b[..5], 3).is_err());
}

#[test]
fn uniqueness_requires_shared_challenges() {
    let cfg = InstanceConfig::default();
    let puf = Architecture::NmqRo { g: 200 }.build(&cfg).unwrap();
    let a = ResponseSet::enroll(
        "a",
        &puf,
        &sample_challenges(64, 64, 1).unwrap(),
        &NoiseModel::none(),
    )
    .unwrap();
    let b = ResponseSet::enroll(
        "b",
        &puf,
        &sample_challenges(64, 64, 2).unwrap(),
        &NoiseModel::none(),
    )
    .unwrap();
    assert!(uniqueness(&a, &b, 32).is_err());
    assert_eq!(uniqueness(&a, &a, 32).unwrap(), 0.0);
}

#[test]
fn ber_does_not_decrease_with_jitter() {
    let challenges = sample_challenges(64, 2000, 5).unwrap();
    let env = EnvironmentCondition::enrollment();
    let bers: Vec<f64> = [0.0, 5e-4, 1.7e-3, 4e-3]
        .iter()
        .map(|&sigma_rel| {
            let cfg = InstanceConfig {
                sigma_rel,
                ..InstanceConfig::default().with_seed(5)
            };
            let puf = Architecture::NmqRo { g: 200 }.build(&cfg).unwrap();
            let enrolled = ResponseSet::enroll("x", &puf, &challenges, &cfg.noise()).unwrap();
            bit_error_rate(&puf, &enrolled, &env, &cfg.noise(), 20, 1)
                .unwrap()
                .error_ratio()
        })
        .collect();
    assert_eq!(bers[0], 0.0);
    assert!(bers.windows(2).all(|w| w[0] <= w[1]), "{bers:?}");
}

#[test]
fn uniformity_spreads_more_at_small_g() {
    let challenges = sample_challenges(64, 2000, 6).unwrap();
    let spread = |g: u32| {
        let u: Vec<f64> = (0..20)
            .map(|s| {
                let puf = Architecture::NmqRo { g }
                    .build(&InstanceConfig::default().with_seed(s))
                    .unwrap();
                uniformity(
                    &ResponseSet::enroll("x", &puf, &challenges, &NoiseModel::none()).unwrap(),
                )
                .unwrap()
            })
            .collect();
        nmq_puf::metrics::std_dev(&u)
    };
    let (s100, s400) = (spread(100), spread(400));
    assert!(s100 > s400, "{s100} vs {s400}");
}

proptest! {
    #[test]
    fn hamming_distance_is_symmetric(a in prop::collection::vec(any::<bool>(), 64), b in prop::collection::vec(any::<bool>(), 64)) {
        prop_assert_eq!(hamming_groups(&a, &b, 16).unwrap(), hamming_groups(&b, &a, 16).unwrap());
        prop_assert!(hamming_groups(&a, &a, 16).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn failure_probability_monotone_in_threshold(ber in 0.01f64..0.5, n in 10u64..300, t in 0u64..300) {
        let t = t.min(n);
        prop_assert!(exact_failure_probability(ber, n, t) <= exact_failure_probability(ber, n, (t + 1).min(n + 1)) + 1e-15);
    }
}
