//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored, lists are comma-separated and
//! booleans are `true`/`false`. Unknown keys are an error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use gbi_core::bayes::GenerativeParams;
use gbi_core::gbi::InferenceConfig;
use gbi_core::seq_model::SeqModelConfig;
use gbi_core::synth;
use gbi_core::vision::{AutoencoderConfig, ClassifierConfig, OodStatistic, TrainConfig};

/// Raised for malformed configuration text or values.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,

    pub n_steps: usize,
    pub p_v: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    /// Emission std of the second hypothesis.
    pub sigma2: f64,
    pub min_block: usize,
    pub max_block: usize,

    pub hidden: usize,
    pub history: usize,
    pub seq_lr: f32,
    pub z_temperature: f32,
    pub trim: usize,
    pub active_fraction: f64,

    pub gamma: f32,
    pub alpha: f32,
    pub iter_steps: usize,
    pub iter_lr: f32,
    pub iter_l2: f32,
    pub engaged_lr: f32,

    pub sweep_means: Vec<f64>,
    pub sweep_sigma: f64,
    pub steps_per_mean: usize,
    pub eval_tail: usize,
    pub stream_steps: usize,
    pub graft_scale: f64,

    pub epochs: usize,
    pub batch: usize,
    pub vision_lr: f32,
    pub head_hidden: usize,
    pub standardize: bool,
    /// 0 means the whole split.
    pub train_limit: usize,
    pub test_limit: usize,
    pub method: String,
    pub ood_stat: OodStatistic,
    pub cond_image: usize,

    /// Empty means `$GBI_DATA_DIR`, then `data`.
    pub data_dir: String,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GenerativeParams::default();
        let s = SeqModelConfig::default();
        let i = InferenceConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            experiment: "default".into(),
            seed: 0,
            n_steps: 3000,
            p_v: g.p_v,
            mu1: g.mu[0],
            mu2: g.mu[1],
            sigma: g.sigma,
            sigma2: g.sigma,
            min_block: g.min_block,
            max_block: g.max_block,
            hidden: s.hidden,
            history: s.history,
            seq_lr: s.lr,
            z_temperature: s.z_temperature,
            trim: s.trim,
            active_fraction: 0.25,
            gamma: i.gamma,
            alpha: i.alpha,
            iter_steps: i.iter_steps,
            iter_lr: i.iter_lr,
            iter_l2: i.iter_l2,
            engaged_lr: i.engaged_lr,
            sweep_means: synth::default_sweep_means(),
            sweep_sigma: g.sigma,
            steps_per_mean: 100,
            eval_tail: 100,
            stream_steps: 500,
            graft_scale: 10.0,
            epochs: t.epochs,
            batch: t.batch,
            vision_lr: t.lr,
            head_hidden: 0,
            standardize: true,
            train_limit: 0,
            test_limit: 0,
            method: "gbi".into(),
            ood_stat: OodStatistic::BeliefMax,
            cond_image: 0,
            data_dir: String::new(),
            out_dir: "runs/default".into(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError(format!("key {key}: cannot parse {v:?}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s.trim())).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError(format!("key {key}: expected true or false, got {v:?}"))),
    }
}

fn ood_name(s: OodStatistic) -> &'static str {
    match s {
        OodStatistic::BeliefMax => "belief_max",
        OodStatistic::NegMinGradient => "neg_min_gradient",
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "experiment" => self.experiment = v.to_string(),
            "seed" => self.seed = num(key, v)?,
            "n_steps" => self.n_steps = num(key, v)?,
            "p_v" => self.p_v = num(key, v)?,
            "mu1" => self.mu1 = num(key, v)?,
            "mu2" => self.mu2 = num(key, v)?,
            "sigma" => self.sigma = num(key, v)?,
            "sigma2" => self.sigma2 = num(key, v)?,
            "min_block" => self.min_block = num(key, v)?,
            "max_block" => self.max_block = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "history" => self.history = num(key, v)?,
            "seq_lr" => self.seq_lr = num(key, v)?,
            "z_temperature" => self.z_temperature = num(key, v)?,
            "trim" => self.trim = num(key, v)?,
            "active_fraction" => self.active_fraction = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "iter_steps" => self.iter_steps = num(key, v)?,
            "iter_lr" => self.iter_lr = num(key, v)?,
            "iter_l2" => self.iter_l2 = num(key, v)?,
            "engaged_lr" => self.engaged_lr = num(key, v)?,
            "sweep_means" => self.sweep_means = list(key, v)?,
            "sweep_sigma" => self.sweep_sigma = num(key, v)?,
            "steps_per_mean" => self.steps_per_mean = num(key, v)?,
            "eval_tail" => self.eval_tail = num(key, v)?,
            "stream_steps" => self.stream_steps = num(key, v)?,
            "graft_scale" => self.graft_scale = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "vision_lr" => self.vision_lr = num(key, v)?,
            "head_hidden" => self.head_hidden = num(key, v)?,
            "standardize" => self.standardize = boolean(key, v)?,
            "train_limit" => self.train_limit = num(key, v)?,
            "test_limit" => self.test_limit = num(key, v)?,
            "method" => self.method = v.to_string(),
            "ood_stat" => {
                self.ood_stat = match v {
                    "belief_max" => OodStatistic::BeliefMax,
                    "neg_min_gradient" => OodStatistic::NegMinGradient,
                    _ => return Err(ConfigError(format!("key ood_stat: unknown statistic {v:?}"))),
                }
            }
            "cond_image" => self.cond_image = num(key, v)?,
            "data_dir" => self.data_dir = v.to_string(),
            "out_dir" => self.out_dir = v.to_string(),
            _ => return Err(ConfigError(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("experiment", self.experiment.clone()),
            ("seed", self.seed.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("p_v", self.p_v.to_string()),
            ("mu1", self.mu1.to_string()),
            ("mu2", self.mu2.to_string()),
            ("sigma", self.sigma.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("min_block", self.min_block.to_string()),
            ("max_block", self.max_block.to_string()),
            ("hidden", self.hidden.to_string()),
            ("history", self.history.to_string()),
            ("seq_lr", self.seq_lr.to_string()),
            ("z_temperature", self.z_temperature.to_string()),
            ("trim", self.trim.to_string()),
            ("active_fraction", self.active_fraction.to_string()),
            ("gamma", self.gamma.to_string()),
            ("alpha", self.alpha.to_string()),
            ("iter_steps", self.iter_steps.to_string()),
            ("iter_lr", self.iter_lr.to_string()),
            ("iter_l2", self.iter_l2.to_string()),
            ("engaged_lr", self.engaged_lr.to_string()),
            ("sweep_means", join(&self.sweep_means)),
            ("sweep_sigma", self.sweep_sigma.to_string()),
            ("steps_per_mean", self.steps_per_mean.to_string()),
            ("eval_tail", self.eval_tail.to_string()),
            ("stream_steps", self.stream_steps.to_string()),
            ("graft_scale", self.graft_scale.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("vision_lr", self.vision_lr.to_string()),
            ("head_hidden", self.head_hidden.to_string()),
            ("standardize", self.standardize.to_string()),
            ("train_limit", self.train_limit.to_string()),
            ("test_limit", self.test_limit.to_string()),
            ("method", self.method.clone()),
            ("ood_stat", ood_name(self.ood_stat).to_string()),
            ("cond_image", self.cond_image.to_string()),
            ("data_dir", self.data_dir.clone()),
            ("out_dir", self.out_dir.clone()),
        ]
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", n + 1, e.0)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            writeln!(s, "{k} = {v}").expect("writing to a string");
        }
        s
    }

    pub fn generative(&self) -> Result<GenerativeParams> {
        let p = GenerativeParams {
            mu: [self.mu1, self.mu2],
            sigma: self.sigma,
            p_v: self.p_v,
            min_block: self.min_block,
            max_block: self.max_block,
        };
        p.validate()?;
        if !(self.sigma2 > 0.0) {
            bail!(ConfigError(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(p)
    }

    pub fn sigmas(&self) -> [f64; 2] {
        [self.sigma, self.sigma2]
    }

    pub fn seq_model(&self) -> Result<SeqModelConfig> {
        let c = SeqModelConfig {
            hidden: self.hidden,
            history: self.history,
            lr: self.seq_lr,
            z_temperature: self.z_temperature,
            trim: self.trim,
            ..SeqModelConfig::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn inference(&self) -> Result<InferenceConfig> {
        let c = InferenceConfig {
            gamma: self.gamma,
            alpha: self.alpha,
            iter_steps: self.iter_steps,
            iter_lr: self.iter_lr,
            iter_l2: self.iter_l2,
            engaged_lr: self.engaged_lr,
            ..InferenceConfig::default()
        };
        c.validate()?;
        Ok(c)
    }

    fn vision_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.vision_lr,
            batch: self.batch,
        }
    }

    pub fn autoencoder(&self) -> AutoencoderConfig {
        AutoencoderConfig {
            train: self.vision_train(),
            ..AutoencoderConfig::default()
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            head_hidden: self.head_hidden,
            train: self.vision_train(),
        }
    }

    /// `data_dir`, else `$GBI_DATA_DIR`, else `data`.
    pub fn data_root(&self) -> PathBuf {
        if !self.data_dir.is_empty() {
            return PathBuf::from(&self.data_dir);
        }
        std::env::var_os("GBI_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
    }
}

/// Expands `a..b` (inclusive) or a single integer.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError(format!("--seeds: expected N or A..B, got {s:?}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}
