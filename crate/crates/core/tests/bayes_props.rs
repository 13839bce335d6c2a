use gbi_core::bayes::{self, enumerate, GenerativeParams};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = GenerativeParams> {
    (
        -0.5f64..1.5,
        -0.5f64..1.5,
        0.05f64..0.5,
        prop_oneof![Just(0.005), Just(0.05), Just(0.5), 0.001f64..0.999],
    )
        .prop_map(|(m0, m1, sigma, p_v)| GenerativeParams {
            mu: [m0, m1],
            sigma,
            p_v,
            ..Default::default()
        })
}

fn prior_strategy() -> impl Strategy<Value = [f64; 2]> {
    (0.01f64..0.99).prop_map(|a| [a, 1.0 - a])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn filter_equals_path_enumeration(
        params in params_strategy(),
        prior in prior_strategy(),
        obs in prop::collection::vec(-0.5f64..1.5, 1..=12),
    ) {
        let states = bayes::filter_sequence(&obs, &params, prior).unwrap();
        let (brute, total) = enumerate::posteriors(&obs, &params, prior);
        for (s, b) in states.iter().zip(&brute) {
            prop_assert!((s.posterior[0] - b[0]).abs() < 1e-9);
            prop_assert!((s.posterior[1] - b[1]).abs() < 1e-9);
        }
        // Relative agreement of evidences is an absolute bound on their logs.
        let log_sum = bayes::sequence_log_evidence(&states);
        prop_assert!((log_sum - total).abs() < 1e-9 * total.abs().max(1.0));
        if total > -700.0 {
            let product: f64 = states.iter().map(|s| s.evidence).product();
            prop_assert!(((product - total.exp()) / total.exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_is_normalised(
        params in params_strategy(),
        obs in prop::collection::vec(-0.5f64..1.5, 1..200),
    ) {
        for s in bayes::filter_sequence(&obs, &params, [0.5, 0.5]).unwrap() {
            prop_assert!((s.posterior[0] + s.posterior[1] - 1.0).abs() < 1e-12);
            prop_assert!(s.posterior.iter().all(|p| *p >= 0.0));
            prop_assert!(s.log_evidence.is_finite());
        }
    }

    #[test]
    fn likelihood_reflection_symmetry(params in params_strategy(), x in -1.0f64..2.0) {
        let swapped = GenerativeParams { mu: [params.mu[1], params.mu[0]], ..params };
        let centre = 0.5 * (params.mu[0] + params.mu[1]);
        let a = bayes::log_likelihoods(x, &params);
        let b = bayes::log_likelihoods(2.0 * centre - x, &swapped);
        // Reflection round-trips through floating point, so compare to a few ulps.
        prop_assert!((a[0] - b[0]).abs() <= 1e-9 * a[0].abs().max(1.0));
        prop_assert!((a[1] - b[1]).abs() <= 1e-9 * a[1].abs().max(1.0));
    }
}

#[test]
fn twelve_step_sequence_on_pv_grid() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(12);
    for p_v in [0.005, 0.05, 0.5] {
        let params = GenerativeParams { p_v, ..Default::default() };
        let obs: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let states = bayes::filter_sequence(&obs, &params, [0.5, 0.5]).unwrap();
        let (brute, _) = enumerate::posteriors(&obs, &params, [0.5, 0.5]);
        let worst = states
            .iter()
            .zip(&brute)
            .map(|(s, b)| (s.posterior[0] - b[0]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "p_v={p_v}: {worst}");
    }
}
