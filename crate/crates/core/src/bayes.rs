//! Exact forward filtering for the two-hypothesis switching Gaussian model.
//!
//! Hypothesis `0` emits `N(mu[0], sigma)`, hypothesis `1` emits `N(mu[1], sigma)`.
//! The latent switches with probability `p_v` per step through the symmetric
//! transition matrix `[[1−p_v, p_v], [p_v, 1−p_v]]`. Everything runs in `f64`
//! and combines likelihoods in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    pub mu: [f64; 2],
    pub sigma: f64,
    pub p_v: f64,
    pub min_block: usize,
    pub max_block: usize,
}

impl Default for GenerativeParams {
    fn default() -> Self {
        GenerativeParams {
            mu: [0.2, 0.8],
            sigma: 0.1,
            p_v: 0.005,
            min_block: 20,
            max_block: 50,
        }
    }
}

impl GenerativeParams {
    /// `p_v` may be 0 or 1 here; the open interval is only needed by the data generator.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.p_v) {
            return Err(Error::invalid(format!("p_v must lie in [0, 1], got {}", self.p_v)));
        }
        if self.min_block == 0 || self.min_block > self.max_block {
            return Err(Error::invalid(format!(
                "block bounds must satisfy 1 <= min <= max, got {}..{}",
                self.min_block, self.max_block
            )));
        }
        Ok(())
    }

    pub fn transition(&self) -> [[f64; 2]; 2] {
        let stay = 1.0 - self.p_v;
        [[stay, self.p_v], [self.p_v, stay]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    /// p(z_t | x_{0:t})
    pub posterior: [f64; 2],
    /// p(x_t | z_t) for each hypothesis (or the substituted pseudo-likelihood).
    pub likelihood: [f64; 2],
    /// p(x_t | x_{0:t-1}), the normaliser of this step.
    pub evidence: f64,
    pub log_evidence: f64,
}

pub fn log_gaussian(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Gaussian density `N(x; mu, sigma)`.
pub fn gaussian_likelihood(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(log_gaussian(x, mu, sigma).exp())
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_prior(prior: [f64; 2]) -> Result<()> {
    let s = prior[0] + prior[1];
    if prior.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || !(s > 0.0) {
        return Err(Error::invalid(format!("degenerate prior {prior:?}")));
    }
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("prior must sum to 1, sums to {s}")));
    }
    Ok(())
}

/// Prediction through the transition matrix: `T · prior`.
pub fn predict(prior: [f64; 2], p_v: f64) -> [f64; 2] {
    [
        (1.0 - p_v) * prior[0] + p_v * prior[1],
        p_v * prior[0] + (1.0 - p_v) * prior[1],
    ]
}

/// One filtering step from per-hypothesis log-likelihoods.
pub fn filter_step_log_likelihood(prior: [f64; 2], log_lik: [f64; 2], p_v: f64) -> Result<FilterState> {
    check_prior(prior)?;
    let pred = predict(prior, p_v);
    let joint = [log_lik[0] + pred[0].ln(), log_lik[1] + pred[1].ln()];
    let log_evidence = log_sum_exp(joint[0], joint[1]);
    if !log_evidence.is_finite() {
        return Err(Error::invalid("observation has zero probability under every hypothesis"));
    }
    let p0 = (joint[0] - log_evidence).exp();
    let p1 = (joint[1] - log_evidence).exp();
    let s = p0 + p1;
    Ok(FilterState {
        posterior: [p0 / s, p1 / s],
        likelihood: [log_lik[0].exp(), log_lik[1].exp()],
        evidence: log_evidence.exp(),
        log_evidence,
    })
}

pub fn log_likelihoods(x: f64, params: &GenerativeParams) -> [f64; 2] {
    [
        log_gaussian(x, params.mu[0], params.sigma),
        log_gaussian(x, params.mu[1], params.sigma),
    ]
}

pub fn filter_step(prior: [f64; 2], x: f64, params: &GenerativeParams) -> Result<FilterState> {
    params.validate()?;
    filter_step_log_likelihood(prior, log_likelihoods(x, params), params.p_v)
}

/// Folds [`filter_step`] over `obs`, starting from `initial_prior` over the state
/// before the first observation.
pub fn filter_sequence(obs: &[f64], params: &GenerativeParams, initial_prior: [f64; 2]) -> Result<Vec<FilterState>> {
    if obs.is_empty() {
        return Err(Error::invalid("filter_sequence needs at least one observation"));
    }
    params.validate()?;
    let mut prior = initial_prior;
    let mut out = Vec::with_capacity(obs.len());
    for &x in obs {
        let st = filter_step_log_likelihood(prior, log_likelihoods(x, params), params.p_v)?;
        prior = st.posterior;
        out.push(st);
    }
    Ok(out)
}

/// Total log evidence `log p(x_{0:T})` of a filtered run.
pub fn sequence_log_evidence(states: &[FilterState]) -> f64 {
    states.iter().map(|s| s.log_evidence).sum()
}

/// Filtering step with a gradient-derived pseudo-likelihood in place of the Gaussian.
///
/// Each hypothesis gets `sigmoid(−scale · gradient)`: a negative loss gradient
/// (increasing that hypothesis lowers the loss) maps to a likelihood near 1.
pub fn graft_step(prior: [f64; 2], z_gradient: [f64; 2], scale: f64, params: &GenerativeParams) -> Result<FilterState> {
    // log sigmoid(−u) = −softplus(u)
    let log_sig = |u: f64| -(u.max(0.0) + (-u.abs()).exp().ln_1p());
    let log_lik = [log_sig(scale * z_gradient[0]), log_sig(scale * z_gradient[1])];
    filter_step_log_likelihood(prior, log_lik, params.p_v)
}

/// Likelihoods normalised across the two hypotheses: `p(x|z_i) / Σ_j p(x|z_j)`.
pub fn normalized_likelihood(x: f64, params: &GenerativeParams) -> [f64; 2] {
    let ll = log_likelihoods(x, params);
    let z = log_sum_exp(ll[0], ll[1]);
    [(ll[0] - z).exp(), (ll[1] - z).exp()]
}

/// Brute-force reference: enumerates every latent path. Exponential in length;
/// only for checking the filter on short sequences.
#[cfg(any(test, feature = "oracles"))]
pub mod enumerate {
    use super::*;

    /// Filtered posteriors `p(z_t | x_{0:t})` and the total log evidence
    /// `log p(x_{0:T})`, both by summing the joint over all `2^(t+1)` latent prefixes.
    pub fn posteriors(obs: &[f64], params: &GenerativeParams, initial_prior: [f64; 2]) -> (Vec<[f64; 2]>, f64) {
        assert!(obs.len() <= 20, "path enumeration is exponential");
        let t_mat = params.transition();
        let log_t = t_mat.map(|row| row.map(f64::ln));
        let loglik = |x: f64, z: usize| log_gaussian(x, params.mu[z], params.sigma);
        // Distribution of the first latent state: one transition from the initial prior.
        let first = [
            initial_prior[0] * t_mat[0][0] + initial_prior[1] * t_mat[1][0],
            initial_prior[0] * t_mat[0][1] + initial_prior[1] * t_mat[1][1],
        ];
        let mut posts = Vec::with_capacity(obs.len());
        let mut total = f64::NEG_INFINITY;
        for t in 0..obs.len() {
            let mut log_mass = [f64::NEG_INFINITY; 2];
            for path in 0u32..(1 << (t + 1)) {
                let z = |i: usize| ((path >> i) & 1) as usize;
                let mut lp = first[z(0)].ln() + loglik(obs[0], z(0));
                for i in 1..=t {
                    lp += log_t[z(i - 1)][z(i)] + loglik(obs[i], z(i));
                }
                log_mass[z(t)] = log_sum_exp(log_mass[z(t)], lp);
            }
            let s = log_sum_exp(log_mass[0], log_mass[1]);
            posts.push([(log_mass[0] - s).exp(), (log_mass[1] - s).exp()]);
            total = s;
        }
        (posts, total)
    }
}
