mod common;

use gbi_core::bayes::{self, GenerativeParams};
use gbi_core::gbi::*;
use gbi_core::metrics;
use gbi_core::seq_model::{Lstm, SeqModelConfig, ToyBatch};
use gbi_core::synth;
use proptest::prelude::*;

fn random_windows(seed: u64, n: usize) -> ToyBatch {
    let obs = common::constant_stream(0.5, 0.4, n + 5, seed);
    ToyBatch::windows(&obs, 5).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_step_is_a_distribution(seed in 0u64..10_000, gamma in 0.01f32..100.0) {
        let m = Lstm::new(SeqModelConfig { hidden: 12, ..Default::default() }, seed).unwrap();
        let cfg = InferenceConfig { gamma, ..Default::default() };
        for b in one_step_infer(&m, &random_windows(seed, 20), &cfg).unwrap() {
            let p = b.probs();
            prop_assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn permuting_task_units_permutes_beliefs(seed in 0u64..10_000) {
        let m = Lstm::new(SeqModelConfig { hidden: 12, ..Default::default() }, seed).unwrap();
        let mut swapped = m.clone();
        swapped.permute_task_units(0, 1);
        let batch = random_windows(seed ^ 1, 16);
        let cfg = InferenceConfig::default();
        let a = one_step_infer(&m, &batch, &cfg).unwrap();
        let b = one_step_infer(&swapped, &batch, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let (px, py) = (x.probs(), y.probs());
            prop_assert!((px[0] - py[1]).abs() < 1e-5 && (px[1] - py[0]).abs() < 1e-5, "{px:?} {py:?}");
        }
    }

    #[test]
    fn larger_gamma_concentrates(seed in 0u64..10_000, g1 in 0.1f32..5.0, extra in 0.1f32..5.0) {
        let m = Lstm::new(SeqModelConfig { hidden: 12, ..Default::default() }, seed).unwrap();
        let batch = random_windows(seed, 8);
        let lo = one_step_infer(&m, &batch, &InferenceConfig { gamma: g1, ..Default::default() }).unwrap();
        let hi = one_step_infer(&m, &batch, &InferenceConfig { gamma: g1 + extra, ..Default::default() }).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(b.entropy() <= a.entropy() + 1e-9);
        }
    }
}

#[test]
fn iterative_trace_is_bookkept() {
    let m = common::trained_gbi();
    let batch = random_windows(3, 10);
    let cfg = InferenceConfig {
        iter_steps: 7,
        ..Default::default()
    };
    let init = one_step_infer(m, &batch, &cfg).unwrap();
    let t = iterative_optimize(m, &batch, &init, &cfg).unwrap();
    assert_eq!(t.logits.len(), 8);
    assert_eq!(t.losses.len(), 8);
    let down = t.losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(down as f64 >= 0.8 * 7.0, "{:?}", t.losses);
}

#[test]
fn engaged_mode_settles_on_a_constant_stream() {
    let m = common::trained_gbi();
    let obs = common::constant_stream(0.2, 0.1, 400, 21);
    let run = engaged_mode_run(m, &obs, &InferenceConfig::default(), &TaskBelief::uniform(2)).unwrap();
    assert!(run[run.len() - 100..].iter().all(|s| s.z[0] > s.z[1]));
}

#[test]
fn engaged_mode_follows_block_switches() {
    let m = common::trained_gbi();
    let data = synth::generate_blocks(31, 3000, &GenerativeParams::default()).unwrap();
    let run = engaged_mode_run(m, &data.observations, &InferenceConfig::default(), &TaskBelief::uniform(2)).unwrap();
    let offset = run[0].step;
    let (mut switches, mut caught) = (0, 0);
    for &b in data.block_boundaries.iter().skip(1) {
        if b + 20 >= data.len() || b < offset {
            continue;
        }
        switches += 1;
        let want = data.z_true[b];
        let hit = (b..b + 20).any(|t| {
            let z = run[t - offset].z;
            (z[1] > z[0]) == (want == 1)
        });
        caught += usize::from(hit);
    }
    assert!(switches > 30);
    assert!(caught as f64 >= 0.9 * switches as f64, "{caught}/{switches}");
}

#[test]
fn ambiguous_stream_still_matches_the_mean() {
    let m = common::trained_gbi();
    let obs = common::constant_stream(0.5, 0.1, 300, 41);
    let run = engaged_mode_run(m, &obs, &InferenceConfig::default(), &TaskBelief::uniform(2)).unwrap();
    let mean = run.iter().map(|s| s.pred_mean).sum::<f64>() / run.len() as f64;
    assert!((mean - 0.5).abs() < 0.1, "{mean}");
}

#[test]
fn correct_task_input_beats_wrong_in_engaged_blocks() {
    let m = common::trained_gbi();
    let cfg = InferenceConfig::default();
    for (k, mu) in [0.2, 0.8].into_iter().enumerate() {
        let obs = common::constant_stream(mu, 0.1, 100, 50 + k as u64);
        let sweep = vec![(mu, obs)];
        let right = generalization_eval(m, &sweep, EvalMode::Fixed(k), &cfg, 100).unwrap()[0].mse;
        let wrong = generalization_eval(m, &sweep, EvalMode::Fixed(1 - k), &cfg, 100).unwrap()[0].mse;
        assert!(right <= wrong, "{mu}: {right} vs {wrong}");
        // Residual variance is σ² = 0.01; allow the training slack.
        assert!(right <= 0.01 + 0.02, "{mu}: {right}");
    }
}

#[test]
fn neural_evidence_prefers_familiar_data() {
    let m = common::trained_gbi();
    let cfg = InferenceConfig::default();
    let familiar = synth::generate_blocks(61, 600, &GenerativeParams::default()).unwrap();
    let strange = common::constant_stream(1.2, 0.1, 600, 62);
    let ev = |obs: &[f64]| {
        let v: Vec<f64> = engaged_mode_run(m, obs, &cfg, &TaskBelief::uniform(2))
            .unwrap()
            .iter()
            .map(|s| s.evidence)
            .collect();
        metrics::median(&v)
    };
    let (a, b) = (ev(&familiar.observations), ev(&strange));
    assert!(a > b, "familiar {a} strange {b}");
    assert_eq!(neural_evidence(&[0.3, 0.7], &[0.0, 0.0]), 0.0);
}

#[test]
fn default_mode_agrees_with_the_likelihood() {
    let m = common::trained_gbi();
    let params = GenerativeParams::default();
    let data = synth::generate_blocks(1000, 500, &params).unwrap();
    let run = default_mode_run(m, &data.observations, &InferenceConfig::default()).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in &run {
        a.push(s.z[0]);
        b.push(bayes::normalized_likelihood(s.x, &params)[0]);
    }
    assert!(metrics::pearson(&a, &b) > 0.8);
}
