//! Deterministic generators for the switching-Gaussian toy task.
//!
//! Switching decisions and emissions draw from two independent streams derived
//! from the seed, so changing emission parameters never moves block boundaries.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::GenerativeParams;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

const SWITCH_STREAM: u64 = 1;
const EMIT_STREAM: u64 = 2;
const START_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSequence {
    pub observations: Vec<f64>,
    /// Active hypothesis index per step.
    pub z_true: Vec<usize>,
    /// Start index of every block; always begins with 0.
    pub block_boundaries: Vec<usize>,
}

impl BlockSequence {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn one_hot(&self, t: usize) -> [f64; 2] {
        let mut v = [0.0; 2];
        v[self.z_true[t]] = 1.0;
        v
    }

    /// Half-open `[start, end)` ranges of each block. The last block may be
    /// cut short by the end of the sequence.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.block_boundaries.len());
        for (i, &s) in self.block_boundaries.iter().enumerate() {
            let e = self.block_boundaries.get(i + 1).copied().unwrap_or(self.len());
            out.push((s, e));
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "step,x,z_true")?;
        for (t, (x, z)) in self.observations.iter().zip(&self.z_true).enumerate() {
            writeln!(w, "{t},{x},{z}")?;
        }
        Ok(())
    }
}

/// Latent hypothesis sequence with block-length bounds. Switches are forbidden
/// while the current block is shorter than `min_block` and forced once it
/// reaches `max_block`; otherwise each step switches with probability `p_v`.
pub fn latent_blocks(seed: u64, n_steps: usize, params: &GenerativeParams) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    params.validate()?;
    let mut start = rng::stream(seed, START_STREAM);
    let mut switch = rng::stream(seed, SWITCH_STREAM);
    let mut z = usize::from(start.random::<bool>());
    let mut labels = Vec::with_capacity(n_steps);
    let mut boundaries = vec![0];
    let mut run = 0usize;
    for t in 0..n_steps {
        if t > 0 {
            // One uniform per step keeps the stream aligned regardless of overrides.
            let u: f64 = switch.random();
            let flip = if run >= params.max_block {
                true
            } else if run < params.min_block {
                false
            } else {
                u < params.p_v
            };
            if flip {
                z = 1 - z;
                run = 0;
                boundaries.push(t);
            }
        }
        labels.push(z);
        run += 1;
    }
    Ok((labels, boundaries))
}

fn emit(rng: &mut SimRng, labels: &[usize], mu: [f64; 2], sigma: [f64; 2]) -> Vec<f64> {
    labels.iter().map(|&z| rng::normal(rng, mu[z], sigma[z])).collect()
}

/// Emission std may differ per hypothesis.
pub fn generate_blocks_with_sigmas(seed: u64, n_steps: usize, params: &GenerativeParams, sigmas: [f64; 2]) -> Result<BlockSequence> {
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid(format!("emission sigmas must be positive, got {sigmas:?}")));
    }
    let (z_true, block_boundaries) = latent_blocks(seed, n_steps, params)?;
    let mut r = rng::stream(seed, EMIT_STREAM);
    let observations = emit(&mut r, &z_true, params.mu, sigmas);
    Ok(BlockSequence {
        observations,
        z_true,
        block_boundaries,
    })
}

pub fn generate_blocks(seed: u64, n_steps: usize, params: &GenerativeParams) -> Result<BlockSequence> {
    generate_blocks_with_sigmas(seed, n_steps, params, [params.sigma; 2])
}

/// `-0.2, -0.1, …, 1.2`
pub fn default_sweep_means() -> Vec<f64> {
    (-2..=12).map(|i| i as f64 / 10.0).collect()
}

/// One single-block sequence per mean, all at std `sigma`. `z_true` is 0 throughout.
pub fn generalization_sweep(seed: u64, means: &[f64], sigma: f64, steps_per_mean: usize) -> Result<Vec<BlockSequence>> {
    if means.is_empty() {
        return Err(Error::invalid("generalization sweep needs at least one mean"));
    }
    if !(sigma > 0.0) || steps_per_mean == 0 {
        return Err(Error::invalid("sweep needs sigma > 0 and steps_per_mean >= 1"));
    }
    Ok(means
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut r = rng::stream(seed, EMIT_STREAM + 16 * (i as u64 + 1));
            BlockSequence {
                observations: (0..steps_per_mean).map(|_| rng::normal(&mut r, mu, sigma)).collect(),
                z_true: vec![0; steps_per_mean],
                block_boundaries: vec![0],
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceSweepSpec {
    pub fixed_mu: f64,
    pub fixed_sigma: f64,
    pub varied_mu: f64,
}

impl Default for VarianceSweepSpec {
    fn default() -> Self {
        VarianceSweepSpec {
            fixed_mu: 0.3,
            fixed_sigma: 0.3,
            varied_mu: 0.7,
        }
    }
}

/// One training stream per `sigmas` entry: hypothesis 0 is `N(fixed_mu, fixed_sigma)`,
/// hypothesis 1 is `N(varied_mu, sigma)`. Block boundaries are shared across entries.
pub fn variance_sweep(
    seed: u64,
    spec: VarianceSweepSpec,
    sigmas: &[f64],
    n_steps: usize,
    block: &GenerativeParams,
) -> Result<Vec<BlockSequence>> {
    let params = GenerativeParams {
        mu: [spec.fixed_mu, spec.varied_mu],
        sigma: spec.fixed_sigma,
        ..*block
    };
    sigmas
        .iter()
        .map(|&s| generate_blocks_with_sigmas(seed, n_steps, &params, [spec.fixed_sigma, s]))
        .collect()
}
