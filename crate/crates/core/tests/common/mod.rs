#![allow(dead_code)]

use std::sync::OnceLock;

use gbi_core::bayes::GenerativeParams;
use gbi_core::seq_model::{train_toy, Lstm, SeqModelConfig, ZSource};
use gbi_core::synth::{self, BlockSequence};

pub const TRAIN_STEPS: usize = 3000;

pub fn training_data() -> &'static BlockSequence {
    static DATA: OnceLock<BlockSequence> = OnceLock::new();
    DATA.get_or_init(|| synth::generate_blocks(0, TRAIN_STEPS, &GenerativeParams::default()).unwrap())
}

pub fn trained_gbi() -> &'static Lstm {
    static M: OnceLock<Lstm> = OnceLock::new();
    M.get_or_init(|| train_toy(&SeqModelConfig::default(), training_data(), ZSource::GroundTruth, 0).unwrap().0)
}

pub fn trained_lstm() -> &'static Lstm {
    static M: OnceLock<Lstm> = OnceLock::new();
    M.get_or_init(|| train_toy(&SeqModelConfig::default(), training_data(), ZSource::None, 0).unwrap().0)
}

pub fn constant_stream(mean: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut r = gbi_core::rng::stream(seed, 0x7E57);
    (0..n).map(|_| gbi_core::rng::normal(&mut r, mean, sigma)).collect()
}
