//! Deterministic fixtures shared by the benchmarks.

use gbi_core::bayes::GenerativeParams;
use gbi_core::rng;
use gbi_core::synth::{self, BlockSequence};
use gbi_core::Tensor;

/// Standard-normal tensor of `shape`, fixed by `seed`.
pub fn normal_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 0xBE7C);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng::normal(&mut r, 0.0, 1.0) as f32).collect()).expect("shape matches data")
}

/// Default two-hypothesis stream of `n` steps.
pub fn toy_stream(n: usize) -> BlockSequence {
    synth::generate_blocks(0, n, &GenerativeParams::default()).expect("default parameters are valid")
}

/// `n` MNIST-shaped images with pixels in `[0.25, 0.75]`.
pub fn images(n: usize) -> Tensor {
    normal_tensor(&[n, 1, 28, 28], 7).map(|v| 0.5 + 0.125 * v.clamp(-2.0, 2.0))
}
