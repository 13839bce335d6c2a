//! Subcommand implementations. Each writes its artifacts into a run directory
//! alongside the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use gbi_core::bayes::{self, GenerativeParams};
use gbi_core::checkpoint::Checkpoint;
use gbi_core::gbi::{self, EvalMode, StreamStep};
use gbi_core::metrics::{self, MseGroup};
use gbi_core::seq_model::{self, Lstm, ToyBatch, ZSource};
use gbi_core::synth::{self, BlockSequence};
use gbi_core::vision::{self, ConvAutoencoder, ConvClassifier, LabeledImageSet, Method, Normalization};
use gbi_core::Tensor;

use crate::config::{ConfigError, RunConfig};

pub const GBI_LSTM_CKPT: &str = "gbi_lstm.ckpt";
pub const LSTM_CKPT: &str = "lstm.ckpt";
pub const AUTOENCODER_CKPT: &str = "autoencoder.ckpt";
pub const CLASSIFIER_CKPT: &str = "classifier.ckpt";
pub const RESOLVED_CONFIG: &str = "config.resolved";

/// Where a subcommand reads models from and writes artifacts to.
#[derive(Clone, Debug)]
pub struct RunDirs {
    pub out: PathBuf,
    pub models: PathBuf,
}

impl RunDirs {
    pub fn same(dir: impl Into<PathBuf>) -> Self {
        let out = dir.into();
        RunDirs { models: out.clone(), out }
    }

    fn prepare(&self, cfg: &RunConfig) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        fs::write(self.out.join(RESOLVED_CONFIG), cfg.render())?;
        Ok(())
    }

    fn model(&self, name: &str) -> Result<Checkpoint> {
        let path = self.models.join(name);
        Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Toy task

/// Training stream for `cfg`; hypothesis 2 uses `sigma2`.
pub fn toy_data(cfg: &RunConfig) -> Result<BlockSequence> {
    Ok(synth::generate_blocks_with_sigmas(cfg.seed, cfg.n_steps, &cfg.generative()?, cfg.sigmas())?)
}

/// Held-out stream seed for a run seed; disjoint from every training seed below 2^32.
pub fn held_out_seed(seed: u64) -> u64 {
    seed ^ 0xA5A5_0000_0000_0000
}

#[derive(Serialize)]
struct SweepRow {
    mean: f64,
    step: usize,
    x: f64,
}

pub fn gen_data(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let data = toy_data(cfg)?;
    let mut f = fs::File::create(dirs.out.join("observations.csv"))?;
    data.write_csv(&mut f)?;
    let sweep = synth::generalization_sweep(cfg.seed, &cfg.sweep_means, cfg.sweep_sigma, cfg.steps_per_mean)?;
    let rows: Vec<SweepRow> = cfg
        .sweep_means
        .iter()
        .zip(&sweep)
        .flat_map(|(&mean, s)| s.observations.iter().enumerate().map(move |(step, &x)| SweepRow { mean, step, x }))
        .collect();
    write_csv(&dirs.out.join("sweep.csv"), &rows)
}

#[derive(Serialize)]
struct BlockRow {
    block: usize,
    start: usize,
    end: usize,
    z: usize,
    gbi_loss: f64,
    lstm_loss: f64,
    gbi_trimmed: f64,
    lstm_trimmed: f64,
}

#[derive(Clone, Debug)]
pub struct ToyModels {
    pub gbi: Lstm,
    pub lstm: Lstm,
    pub gbi_log: seq_model::TrainLog,
    pub lstm_log: seq_model::TrainLog,
    pub data: BlockSequence,
}

pub fn train_toy_models(cfg: &RunConfig) -> Result<ToyModels> {
    let data = toy_data(cfg)?;
    let mc = cfg.seq_model()?;
    let (gbi, gbi_log) = seq_model::train_toy(&mc, &data, ZSource::GroundTruth, cfg.seed)?;
    let (lstm, lstm_log) = seq_model::train_toy(&mc, &data, ZSource::None, cfg.seed)?;
    Ok(ToyModels {
        gbi,
        lstm,
        gbi_log,
        lstm_log,
        data,
    })
}

pub fn train_toy(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let m = train_toy_models(cfg)?;
    let g = cfg.generative()?;
    let last_z = *m.data.z_true.last().expect("non-empty training data");
    let meta = json!({
        "seed": cfg.seed,
        "steps": m.gbi_log.step_losses.len(),
        "last_block_mean": g.mu[last_z],
        "training_means": g.mu,
    });
    m.gbi.to_checkpoint(meta.clone()).save(dirs.out.join(GBI_LSTM_CKPT))?;
    m.lstm.to_checkpoint(meta).save(dirs.out.join(LSTM_CKPT))?;

    #[derive(Serialize)]
    struct StepRow {
        step: usize,
        gbi_loss: f64,
        lstm_loss: f64,
    }
    let steps: Vec<StepRow> = m
        .gbi_log
        .step_losses
        .iter()
        .zip(&m.lstm_log.step_losses)
        .enumerate()
        .map(|(i, (&a, &b))| StepRow {
            step: i + cfg.history,
            gbi_loss: a,
            lstm_loss: b,
        })
        .collect();
    write_csv(&dirs.out.join("losses.csv"), &steps)?;

    // Blocks that end inside the first window carry no predictions.
    let blocks: Vec<BlockRow> = m
        .data
        .blocks()
        .into_iter()
        .filter(|&(_, e)| e > cfg.history)
        .enumerate()
        .map(|(k, (s, e))| BlockRow {
            block: k,
            start: s,
            end: e,
            z: m.data.z_true[s],
            gbi_loss: m.gbi_log.block_losses[k],
            lstm_loss: m.lstm_log.block_losses[k],
            gbi_trimmed: m.gbi_log.trimmed_block_losses[k],
            lstm_trimmed: m.lstm_log.trimmed_block_losses[k],
        })
        .collect();
    write_csv(&dirs.out.join("block_losses.csv"), &blocks)?;

    let tv_g = seq_model::task_variance(&seq_model::hidden_by_task(&m.gbi, &m.data)?, cfg.active_fraction)?;
    let tv_l = seq_model::task_variance(&seq_model::hidden_by_task(&m.lstm, &m.data)?, cfg.active_fraction)?;
    write_json(
        &dirs.out.join("train_summary.json"),
        &json!({
            "seed": cfg.seed,
            "blocks": m.gbi_log.block_losses.len(),
            "gbi_trimmed_mean_50": m.gbi_log.mean_trimmed(50),
            "lstm_trimmed_mean_50": m.lstm_log.mean_trimmed(50),
            "gbi_shared_ratio": tv_g.shared_ratio,
            "lstm_shared_ratio": tv_l.shared_ratio,
            "last_block_mean": g.mu[last_z],
        }),
    )
}

fn load_lstm(dirs: &RunDirs, name: &str) -> Result<(Lstm, Checkpoint)> {
    let ck = dirs.model(name)?;
    Ok((Lstm::from_checkpoint(&ck)?, ck))
}

#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct MseRow {
    pub seed: u64,
    pub model: String,
    pub mean: f64,
    pub group: String,
    pub last_block_mean: f64,
    pub mse: f64,
}

/// One-step belief over a grid of constant windows `[x; history]` predicting `x`.
pub fn belief_curve(model: &Lstm, cfg: &RunConfig, xs: &[f64]) -> Result<Vec<[f64; 2]>> {
    let batch = ToyBatch {
        histories: xs.iter().map(|&x| vec![x as f32; model.config.history]).collect(),
        targets: xs.iter().map(|&x| x as f32).collect(),
    };
    Ok(gbi::one_step_infer(model, &batch, &cfg.inference()?)?
        .iter()
        .map(|b| {
            let p = b.probs();
            [p[0] as f64, p[1] as f64]
        })
        .collect())
}

/// `lo, lo + 0.01, …, hi`
pub fn belief_grid(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = ((lo * 100.0).round() as i64, (hi * 100.0).round() as i64);
    (a..=b).map(|i| i as f64 / 100.0).collect()
}

/// Length of the grid region where the second hypothesis' belief exceeds 0.5.
pub fn belief_width(xs: &[f64], curve: &[[f64; 2]]) -> f64 {
    let step = if xs.len() > 1 { xs[1] - xs[0] } else { 0.0 };
    curve.iter().filter(|p| p[1] > 0.5).count() as f64 * step
}

/// Generalization sweep MSE rows for both models of one seed.
pub fn toy_generalization(cfg: &RunConfig, gbi_model: &Lstm, lstm: &Lstm, last_block_mean: f64) -> Result<Vec<MseRow>> {
    let sweep = synth::generalization_sweep(held_out_seed(cfg.seed), &cfg.sweep_means, cfg.sweep_sigma, cfg.steps_per_mean)?;
    let sweep: Vec<(f64, Vec<f64>)> = cfg.sweep_means.iter().copied().zip(sweep.into_iter().map(|s| s.observations)).collect();
    let inf = cfg.inference()?;
    let train_means = [cfg.mu1, cfg.mu2];
    let mut rows = Vec::new();
    for (name, model, mode) in [("gbi_lstm", gbi_model, EvalMode::Engaged), ("lstm", lstm, EvalMode::Baseline)] {
        for r in gbi::generalization_eval(model, &sweep, mode, &inf, cfg.eval_tail)? {
            rows.push(MseRow {
                seed: cfg.seed,
                model: name.into(),
                mean: r.mean,
                group: metrics::mse_group(r.mean, train_means, last_block_mean).key().into(),
                last_block_mean,
                mse: r.mse,
            });
        }
    }
    Ok(rows)
}

pub fn eval_toy(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let (g, ck) = load_lstm(dirs, GBI_LSTM_CKPT)?;
    let (l, _) = load_lstm(dirs, LSTM_CKPT)?;
    let last = ck
        .metadata
        .get("last_block_mean")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| gbi_core::Error::Checkpoint("missing last_block_mean".into()))?;
    let rows = toy_generalization(cfg, &g, &l, last)?;
    write_csv(&dirs.out.join("mse.csv"), &rows)?;

    #[derive(Serialize)]
    struct CurveRow {
        x: f64,
        z0: f64,
        z1: f64,
    }
    let xs = belief_grid(-0.5, 1.5);
    let curve = belief_curve(&g, cfg, &xs)?;
    let out: Vec<CurveRow> = xs.iter().zip(&curve).map(|(&x, p)| CurveRow { x, z0: p[0], z1: p[1] }).collect();
    write_csv(&dirs.out.join("belief_curve.csv"), &out)?;
    write_json(
        &dirs.out.join("eval_summary.json"),
        &json!({"seed": cfg.seed, "hypothesis2_width": belief_width(&xs, &curve), "last_block_mean": last}),
    )
}

/// Per-step comparison of the network's default-mode signals with the exact model.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PosteriorRow {
    pub step: usize,
    pub x: f64,
    pub z_true: usize,
    pub exact0: f64,
    pub exact1: f64,
    pub lik0: f64,
    pub lik1: f64,
    pub graft0: f64,
    pub graft1: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StreamSummary {
    pub belief_likelihood_pearson: f64,
    pub argmax_agreement: f64,
    pub graft_pearson: f64,
    pub engaged_mse: f64,
}

pub struct StreamRun {
    pub data: BlockSequence,
    pub default_mode: Vec<StreamStep>,
    pub engaged: Vec<StreamStep>,
    pub posterior: Vec<PosteriorRow>,
    pub summary: StreamSummary,
}

/// Default-mode, engaged-mode, exact and grafted traces on a held-out stream.
pub fn stream_run(cfg: &RunConfig, model: &Lstm) -> Result<StreamRun> {
    let params = GenerativeParams {
        sigma: cfg.sigma,
        ..cfg.generative()?
    };
    let data = synth::generate_blocks_with_sigmas(held_out_seed(cfg.seed), cfg.stream_steps, &params, cfg.sigmas())?;
    let inf = cfg.inference()?;
    let default_mode = gbi::default_mode_run(model, &data.observations, &inf)?;
    let engaged = gbi::engaged_mode_run(model, &data.observations, &inf, &gbi::TaskBelief::uniform(2))?;
    if default_mode.is_empty() {
        bail!(ConfigError("stream_steps must exceed the model history".into()));
    }
    let lik = |x: f64| -> [f64; 2] {
        let ll = [bayes::log_gaussian(x, params.mu[0], cfg.sigma), bayes::log_gaussian(x, params.mu[1], cfg.sigma2)];
        let m = ll[0].max(ll[1]);
        let (a, b) = ((ll[0] - m).exp(), (ll[1] - m).exp());
        [a / (a + b), b / (a + b)]
    };
    let first = default_mode[0].step;
    let mut exact_prior = [0.5, 0.5];
    let mut graft_prior = [0.5, 0.5];
    let mut posterior = Vec::with_capacity(default_mode.len());
    for s in &default_mode {
        let ll = [bayes::log_gaussian(s.x, params.mu[0], cfg.sigma), bayes::log_gaussian(s.x, params.mu[1], cfg.sigma2)];
        let exact = bayes::filter_step_log_likelihood(exact_prior, ll, params.p_v)?;
        let graft = bayes::graft_step(graft_prior, s.grad_z, cfg.graft_scale, &params)?;
        let l = lik(s.x);
        posterior.push(PosteriorRow {
            step: s.step,
            x: s.x,
            z_true: data.z_true[s.step],
            exact0: exact.posterior[0],
            exact1: exact.posterior[1],
            lik0: l[0],
            lik1: l[1],
            graft0: graft.posterior[0],
            graft1: graft.posterior[1],
        });
        exact_prior = exact.posterior;
        graft_prior = graft.posterior;
    }
    let belief: Vec<f64> = default_mode.iter().map(|s| s.z[0]).collect();
    let liks: Vec<f64> = posterior.iter().map(|p| p.lik0).collect();
    // Steps within 5 of the most recent block boundary are excluded.
    let settled = |t: usize| {
        let b = data.block_boundaries.iter().rev().find(|&&b| b <= t).copied().unwrap_or(0);
        t >= b + 5
    };
    let (mut agree, mut counted) = (0usize, 0usize);
    for (s, p) in default_mode.iter().zip(&posterior) {
        if settled(s.step) {
            counted += 1;
            agree += usize::from((s.z[0] > s.z[1]) == (p.lik0 > p.lik1));
        }
    }
    let summary = StreamSummary {
        belief_likelihood_pearson: metrics::pearson(&belief, &liks),
        argmax_agreement: agree as f64 / counted.max(1) as f64,
        graft_pearson: metrics::pearson(
            &posterior.iter().map(|p| p.graft0).collect::<Vec<_>>(),
            &posterior.iter().map(|p| p.exact0).collect::<Vec<_>>(),
        ),
        engaged_mse: engaged.iter().map(|s| (s.x - s.pred_mean).powi(2)).sum::<f64>() / engaged.len() as f64,
    };
    debug_assert_eq!(first, cfg.history);
    Ok(StreamRun {
        data,
        default_mode,
        engaged,
        posterior,
        summary,
    })
}

pub fn infer_stream(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let (model, _) = load_lstm(dirs, GBI_LSTM_CKPT)?;
    let run = stream_run(cfg, &model)?;
    run.data.write_csv(&mut fs::File::create(dirs.out.join("stream.csv"))?)?;
    gbi::write_trajectory(&mut fs::File::create(dirs.out.join("default_mode.csv"))?, &run.default_mode)?;
    gbi::write_trajectory(&mut fs::File::create(dirs.out.join("engaged_mode.csv"))?, &run.engaged)?;
    write_csv(&dirs.out.join("posterior.csv"), &run.posterior)?;
    write_json(&dirs.out.join("stream_summary.json"), &serde_json::to_value(&run.summary)?)
}

// ---------------------------------------------------------------------------
// Images

fn split(cfg: &RunConfig, dataset: &str, split: &str, limit: usize) -> Result<LabeledImageSet> {
    let dir = cfg.data_root().join(dataset);
    let set = vision::load_split(&dir, split).with_context(|| format!("loading {dataset} {split} from {}", dir.display()))?;
    Ok(if limit > 0 { set.head(limit) } else { set })
}

fn apply(set: &LabeledImageSet, norm: Normalization) -> LabeledImageSet {
    match norm {
        Normalization::Raw => set.clone(),
        Normalization::Standardized { mean, std } => set.standardized_with(mean, std),
    }
}

fn model_stats(norm: Normalization) -> (f64, f64) {
    match norm {
        Normalization::Raw => (0.0, 1.0),
        Normalization::Standardized { mean, std } => (mean, std),
    }
}

#[derive(Serialize)]
struct EpochRow {
    model: &'static str,
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
    val_accuracy: Option<f64>,
}

pub struct VisionModels {
    pub autoencoder: ConvAutoencoder,
    pub classifier: ConvClassifier,
    pub ae_report: vision::TrainReport,
    pub clf_report: vision::TrainReport,
}

/// Trains the autoencoder and the classifier; validation uses the first 1000 test images.
pub fn train_vision(cfg: &RunConfig) -> Result<VisionModels> {
    let train = split(cfg, "mnist", "train", cfg.train_limit)?;
    let val = split(cfg, "mnist", "t10k", 1000)?;
    let (train, val) = if cfg.standardize {
        let (m, s) = train.pixel_stats();
        (train.standardized_with(m, s), val.standardized_with(m, s))
    } else {
        (train, val)
    };
    let (autoencoder, ae_report) = vision::train_autoencoder(&cfg.autoencoder(), &train, &val, cfg.seed)?;
    let (classifier, clf_report) = vision::train_classifier(&cfg.classifier(), &train, &val, cfg.seed)?;
    Ok(VisionModels {
        autoencoder,
        classifier,
        ae_report,
        clf_report,
    })
}

pub fn train_mnist(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let m = train_vision(cfg)?;
    let meta = |norm: Normalization| {
        json!({
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "batch": cfg.batch,
            "optimizer": {"name": "adam", "lr": cfg.vision_lr},
            "normalization": norm,
        })
    };
    m.autoencoder.to_checkpoint(meta(m.autoencoder.normalization)).save(dirs.out.join(AUTOENCODER_CKPT))?;
    m.classifier.to_checkpoint(meta(m.classifier.normalization)).save(dirs.out.join(CLASSIFIER_CKPT))?;
    let mut rows = Vec::new();
    for (model, r) in [("autoencoder", &m.ae_report), ("classifier", &m.clf_report)] {
        for e in 0..r.train_loss.len() {
            rows.push(EpochRow {
                model,
                epoch: e + 1,
                train_loss: r.train_loss[e],
                val_loss: r.val_loss[e],
                val_accuracy: r.val_accuracy.get(e).copied(),
            });
        }
    }
    write_csv(&dirs.out.join("train_log.csv"), &rows)
}

fn load_vision(dirs: &RunDirs) -> Result<(ConvAutoencoder, ConvClassifier)> {
    Ok((
        ConvAutoencoder::from_checkpoint(&dirs.model(AUTOENCODER_CKPT)?)?,
        ConvClassifier::from_checkpoint(&dirs.model(CLASSIFIER_CKPT)?)?,
    ))
}

/// Methods named by `name`: one method, or `all`.
pub fn methods(name: &str, iter_steps: usize) -> Result<Vec<Method>> {
    if name == "all" {
        return Ok(vec![
            Method::Gbi,
            Method::Likelihood,
            Method::Iterative(iter_steps),
            Method::Nbi,
            Method::Discriminative,
        ]);
    }
    Ok(vec![match name.parse::<Method>()? {
        Method::Iterative(_) if name == "iterative" => Method::Iterative(iter_steps),
        m => m,
    }])
}

#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct AccuracyRow {
    pub method: String,
    pub accuracy: f64,
    pub runs: usize,
    pub seed: u64,
}

/// Classifies `test` in chunks; returns per-image results in order.
pub fn classify_set(
    ae: &ConvAutoencoder,
    clf: &ConvClassifier,
    test: &LabeledImageSet,
    method: Method,
    cfg: &RunConfig,
) -> Result<Vec<vision::Classification>> {
    let inf = cfg.inference()?;
    let idx: Vec<usize> = (0..test.len()).collect();
    let mut out = Vec::with_capacity(test.len());
    for chunk in idx.chunks(500) {
        out.extend(vision::classify_batch(ae, Some(clf), &test.batch(chunk), method, &inf)?);
    }
    Ok(out)
}

pub fn accuracy(results: &[vision::Classification], labels: &[usize]) -> f64 {
    results.iter().zip(labels).filter(|(c, &l)| c.class == l).count() as f64 / labels.len() as f64
}

pub fn eval_mnist(cfg: &RunConfig, dirs: &RunDirs, method: &str) -> Result<()> {
    dirs.prepare(cfg)?;
    let (ae, clf) = load_vision(dirs)?;
    let test = apply(&split(cfg, "mnist", "t10k", cfg.test_limit)?, ae.normalization);
    let mut rows = Vec::new();
    for m in methods(method, cfg.iter_steps)? {
        let res = classify_set(&ae, &clf, &test, m, cfg)?;
        rows.push(AccuracyRow {
            method: m.name().into(),
            accuracy: accuracy(&res, &test.labels),
            runs: m.runs(),
            seed: cfg.seed,
        });
        if matches!(m, Method::Gbi | Method::Iterative(_) | Method::Discriminative) {
            let beliefs: Vec<Vec<f32>> = res.into_iter().map(|c| c.scores).collect();
            let bins = metrics::confidence_bins(&beliefs, &test.labels, 10)?;
            write_csv(&dirs.out.join(format!("confidence_{}.csv", m.name())), &bins)?;
        }
    }
    write_csv(&dirs.out.join(format!("accuracy_{method}.csv")), &rows)
}

#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct OodRow {
    pub condition: String,
    pub method: String,
    pub auc: f64,
    pub seed: u64,
}

/// AUCROC of MNIST-test against Fashion-test for GBI and the classifier
/// baselines, with Fashion matched to the model's pixel statistics
/// (`normalized`) or passed through MNIST's transform (`unnormalized`).
pub fn ood_rows(cfg: &RunConfig, ae: &ConvAutoencoder, clf: &ConvClassifier) -> Result<Vec<OodRow>> {
    let inf = cfg.inference()?;
    let mnist = apply(&split(cfg, "mnist", "t10k", cfg.test_limit)?, ae.normalization);
    let fashion_raw = split(cfg, "fashion", "t10k", cfg.test_limit)?;
    let (fm, fs) = fashion_raw.pixel_stats();
    let (mm, ms) = model_stats(ae.normalization);
    // (f − a) / b maps Fashion's mean/std onto the model's training pixel stats.
    let b = fs / ms;
    let normalized = fashion_raw.standardized_with(fm - mm * b, b);
    let unnormalized = apply(&fashion_raw, ae.normalization);
    let all = |s: &LabeledImageSet| s.batch(&(0..s.len()).collect::<Vec<_>>());
    let scores = |x: &Tensor| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let g = vision::ood_scores(ae, x, cfg.ood_stat, &inf)?;
        let (sm, lg) = vision::classifier_ood_scores(clf, x)?;
        Ok((g, sm, lg))
    };
    let ind = scores(&all(&mnist))?;
    let mut rows = Vec::new();
    for (cond, set) in [("normalized", &normalized), ("unnormalized", &unnormalized)] {
        let ood = scores(&all(set))?;
        for (method, a, b) in [
            ("gbi", &ind.0, &ood.0),
            ("classifier_softmax", &ind.1, &ood.1),
            ("classifier_logit", &ind.2, &ood.2),
        ] {
            rows.push(OodRow {
                condition: cond.into(),
                method: method.into(),
                auc: metrics::aucroc(a, b)?.auc,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

pub fn ood(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let (ae, clf) = load_vision(dirs)?;
    write_csv(&dirs.out.join("ood.csv"), &ood_rows(cfg, &ae, &clf)?)
}

pub fn cond_gen(cfg: &RunConfig, dirs: &RunDirs) -> Result<()> {
    dirs.prepare(cfg)?;
    let ae = ConvAutoencoder::from_checkpoint(&dirs.model(AUTOENCODER_CKPT)?)?;
    let test = apply(&split(cfg, "mnist", "t10k", cfg.test_limit)?, ae.normalization);
    if cfg.cond_image >= test.len() {
        bail!(ConfigError(format!("cond_image {} out of range 0..{}", cfg.cond_image, test.len())));
    }
    let image = test.image(cfg.cond_image);
    let labels: Vec<usize> = (0..vision::CLASSES).collect();
    let outs = vision::conditional_generate_all(&ae, image, &labels)?;

    #[derive(Serialize)]
    struct GenRow {
        image: usize,
        true_label: usize,
        forced_label: usize,
        mse: f64,
    }
    let rows: Vec<GenRow> = outs
        .iter()
        .enumerate()
        .map(|(l, o)| GenRow {
            image: cfg.cond_image,
            true_label: test.labels[cfg.cond_image],
            forced_label: l,
            mse: o.iter().zip(image).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>() / vision::PIXELS as f64,
        })
        .collect();
    write_csv(&dirs.out.join("cond_gen.csv"), &rows)?;
    let mut strip: Vec<Vec<f32>> = vec![test.to_raw_pixels(image)];
    strip.extend(outs.iter().map(|o| test.to_raw_pixels(o)));
    let (w, h, px) = vision::strip(&strip);
    let mut f = fs::File::create(dirs.out.join("cond_gen.pgm"))?;
    vision::write_pgm(&mut f, w, h, &px)?;
    Ok(())
}

/// Group key order of the four-row table.
pub fn group_keys() -> [&'static str; 4] {
    MseGroup::ALL.map(|g| g.key())
}
