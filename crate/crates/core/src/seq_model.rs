//! Single-layer LSTM next-observation predictor with a Gaussian output head and
//! an optional task-abstraction input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::gbi::TaskModel;
use crate::optim::{Adam, AdamConfig, Optimizer};
use crate::params::{Bound, ParamId, ParamSet};
use crate::rng;
use crate::synth::BlockSequence;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::Var;

pub const SIGMA_FLOOR: f32 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqModelConfig {
    pub hidden: usize,
    pub history: usize,
    pub has_task_input: bool,
    pub task_dim: usize,
    pub lr: f32,
    /// Ground-truth one-hot task labels are divided by this before the softmax
    /// during training.
    pub z_temperature: f32,
    /// Per-block losses skip this many leading predictions in the trimmed curve.
    pub trim: usize,
}

impl Default for SeqModelConfig {
    fn default() -> Self {
        SeqModelConfig {
            hidden: 100,
            history: 5,
            has_task_input: true,
            task_dim: 2,
            lr: 1e-3,
            z_temperature: 0.1,
            trim: 20,
        }
    }
}

impl SeqModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.history == 0 {
            return Err(Error::invalid("hidden and history must be positive"));
        }
        if self.has_task_input && self.task_dim == 0 {
            return Err(Error::invalid("task_dim must be positive when task input is enabled"));
        }
        if !(self.z_temperature > 0.0) {
            return Err(Error::invalid("z_temperature must be positive"));
        }
        Ok(())
    }

    fn input_dim(&self) -> usize {
        1 + if self.has_task_input { self.task_dim } else { 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: f32,
    pub sigma: f32,
}

/// Windows of past observations and the observation that follows each.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyBatch {
    /// `[B × history]`, oldest first.
    pub histories: Vec<Vec<f32>>,
    pub targets: Vec<f32>,
}

impl ToyBatch {
    pub fn single(history: &[f32], target: f32) -> Self {
        ToyBatch {
            histories: vec![history.to_vec()],
            targets: vec![target],
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Every window of `data` ending at index `t` for `t` in `history-1 .. len-1`,
    /// paired with `x_{t+1}`. Also returns the index of each target.
    pub fn windows(data: &[f64], history: usize) -> (Self, Vec<usize>) {
        let mut b = ToyBatch {
            histories: Vec::new(),
            targets: Vec::new(),
        };
        let mut idx = Vec::new();
        for t in history.saturating_sub(1)..data.len().saturating_sub(1) {
            b.histories.push(data[t + 1 - history..=t].iter().map(|&x| x as f32).collect());
            b.targets.push(data[t + 1] as f32);
            idx.push(t + 1);
        }
        (b, idx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub config: SeqModelConfig,
    pub params: ParamSet,
    w: ParamId,
    b: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

/// Tape handles produced by one forward pass.
pub struct LstmOutput {
    pub mean: Var,
    pub sigma: Var,
    /// Hidden state after the last history step, `[B × hidden]`.
    pub last_hidden: Var,
}

impl Lstm {
    /// Gate weights `[input+hidden × 4·hidden]` in (input, forget, cell, output)
    /// order, uniform in `±1/√hidden`; forget-gate bias starts at 1.
    pub fn new(config: SeqModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let bound = 1.0 / (h as f32).sqrt();
        let mut r = rng::stream(seed, 0x5EC);
        let mut params = ParamSet::new();
        let w = params.add_uniform("lstm.w", &[config.input_dim() + h, 4 * h], bound, &mut r);
        let mut bias: Vec<f32> = (0..4 * h).map(|_| r.random_range(-bound..=bound)).collect();
        bias[h..2 * h].fill(1.0);
        let b = params.add("lstm.b", Tensor::new(vec![4 * h], bias)?);
        let w_out = params.add_uniform("head.w", &[h, 2], bound, &mut r);
        let b_out = params.add_uniform("head.b", &[2], bound, &mut r);
        Ok(Lstm {
            config,
            params,
            w,
            b,
            w_out,
            b_out,
        })
    }

    /// Zeroes the rows of the input weights that read the task units.
    pub fn zero_task_weights(&mut self) {
        if !self.config.has_task_input {
            return;
        }
        let cols = 4 * self.config.hidden;
        let k = self.config.task_dim;
        let w = self.params.get_mut(self.w);
        for v in &mut w.data_mut()[cols..(1 + k) * cols] {
            *v = 0.0;
        }
    }

    /// Swaps task units `i` and `j` in the input weights. A model permuted this
    /// way responds to a permuted belief exactly as the original does.
    pub fn permute_task_units(&mut self, i: usize, j: usize) {
        let cols = 4 * self.config.hidden;
        let w = self.params.get_mut(self.w).data_mut();
        for c in 0..cols {
            w.swap((1 + i) * cols + c, (1 + j) * cols + c);
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, batch: &ToyBatch, task_probs: Option<Var>) -> Result<LstmOutput> {
        let cfg = &self.config;
        let n = batch.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if let Some(bad) = batch.histories.iter().find(|hst| hst.len() != cfg.history) {
            return Err(Error::invalid(format!(
                "history length {} does not match model history {}",
                bad.len(),
                cfg.history
            )));
        }
        match (cfg.has_task_input, task_probs) {
            (true, None) => return Err(Error::invalid("model expects a task input")),
            (false, Some(_)) => return Err(Error::invalid("model has no task input")),
            (true, Some(z)) if tape.shape(z) != [n, cfg.task_dim] => {
                return Err(Error::InvalidShape {
                    op: "lstm",
                    msg: format!("task input {:?}, expected [{n}, {}]", tape.shape(z), cfg.task_dim),
                })
            }
            _ => {}
        }
        let h_dim = cfg.hidden;
        let mut h = tape.constant(Tensor::zeros(vec![n, h_dim]));
        let mut c = tape.constant(Tensor::zeros(vec![n, h_dim]));
        for step in 0..cfg.history {
            let x = tape.constant(Tensor::new(vec![n, 1], batch.histories.iter().map(|hst| hst[step]).collect())?);
            let inp = match task_probs {
                Some(z) => tape.concat_cols(&[x, z, h])?,
                None => tape.concat_cols(&[x, h])?,
            };
            let pre = tape.matmul(inp, p.var(self.w))?;
            let gates = tape.add_row(pre, p.var(self.b))?;
            let i_raw = tape.slice_cols(gates, 0, h_dim)?;
            let f_raw = tape.slice_cols(gates, h_dim, 2 * h_dim)?;
            let g_raw = tape.slice_cols(gates, 2 * h_dim, 3 * h_dim)?;
            let o_raw = tape.slice_cols(gates, 3 * h_dim, 4 * h_dim)?;
            let i = tape.sigmoid(i_raw);
            let f = tape.sigmoid(f_raw);
            let g = tape.tanh(g_raw);
            let o = tape.sigmoid(o_raw);
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;
        }
        let out = tape.matmul(h, p.var(self.w_out))?;
        let out = tape.add_row(out, p.var(self.b_out))?;
        let mean = tape.slice_cols(out, 0, 1)?;
        let raw_sigma = tape.slice_cols(out, 1, 2)?;
        let sp = tape.softplus(raw_sigma);
        let sigma = tape.add_scalar(sp, SIGMA_FLOOR);
        Ok(LstmOutput {
            mean,
            sigma,
            last_hidden: h,
        })
    }

    /// Sum over the batch of the per-sample Gaussian negative log-likelihood.
    pub fn batch_nll(&self, tape: &mut Tape, out: &LstmOutput, batch: &ToyBatch) -> Result<Var> {
        let target = tape.constant(Tensor::new(vec![batch.len(), 1], batch.targets.clone())?);
        let mean_nll = tape.gaussian_nll(out.mean, target, out.sigma)?;
        Ok(tape.scale(mean_nll, batch.len() as f32))
    }

    /// Predictions for a batch; `task_probs` rows are probability vectors.
    pub fn predict(&self, batch: &ToyBatch, task_probs: Option<&Tensor>) -> Result<Vec<GaussianPrediction>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let z = task_probs.map(|t| tape.constant(t.clone()));
        let out = self.forward(&mut tape, &p, batch, z)?;
        Ok(tape
            .value(out.mean)
            .data()
            .iter()
            .zip(tape.value(out.sigma).data())
            .map(|(&mean, &sigma)| GaussianPrediction { mean, sigma })
            .collect())
    }

    /// Final hidden state per sample, `[B × hidden]`.
    pub fn hidden_states(&self, batch: &ToyBatch, task_probs: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let z = task_probs.map(|t| tape.constant(t.clone()));
        let out = self.forward(&mut tape, &p, batch, z)?;
        Ok(tape.value(out.last_hidden).clone())
    }

    /// Softmax of `one_hot / z_temperature`, the training-time task input.
    pub fn sharpened(&self, label: usize) -> Vec<f32> {
        let k = self.config.task_dim;
        let logits: Vec<f32> = (0..k).map(|j| if j == label { 1.0 / self.config.z_temperature } else { 0.0 }).collect();
        crate::kernels::softmax(&logits, &[k], 0, false)
    }

    pub fn sharpened_rows(&self, labels: &[usize]) -> Result<Tensor> {
        let rows: Vec<Vec<f32>> = labels.iter().map(|&l| self.sharpened(l)).collect();
        Tensor::from_rows(&rows)
    }

    pub fn to_checkpoint(&self, mut metadata: serde_json::Value) -> Checkpoint {
        if let serde_json::Value::Object(m) = &mut metadata {
            m.insert("model".into(), "lstm".into());
            m.insert("config".into(), serde_json::to_value(&self.config).expect("config serializes"));
        }
        Checkpoint::new(self.params.to_named(), metadata)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.metadata.get("model").and_then(|v| v.as_str()) != Some("lstm") {
            return Err(Error::Checkpoint("not an LSTM checkpoint".into()));
        }
        let cfg = ckpt
            .metadata
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("missing config".into()))?;
        let config: SeqModelConfig = serde_json::from_value(cfg)?;
        let mut m = Lstm::new(config, 0)?;
        m.params.load_from(&ckpt.tensors)?;
        Ok(m)
    }
}

impl TaskModel for Lstm {
    type Batch = ToyBatch;

    fn task_dim(&self) -> usize {
        if self.config.has_task_input {
            self.config.task_dim
        } else {
            0
        }
    }

    fn batch_size(&self, batch: &ToyBatch) -> usize {
        batch.len()
    }

    fn task_loss(&self, tape: &mut Tape, batch: &ToyBatch, task_probs: Var) -> Result<Var> {
        let p = self.params.bind(tape, false);
        let out = self.forward(tape, &p, batch, Some(task_probs))?;
        self.batch_nll(tape, &out, batch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZSource {
    GroundTruth,
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// One entry per training sample (`n_steps − history`).
    pub step_losses: Vec<f64>,
    /// Mean loss of the predictions whose target falls in each block.
    pub block_losses: Vec<f64>,
    /// Same, excluding the first `trim` predictions of each block; NaN when a
    /// block has nothing left.
    pub trimmed_block_losses: Vec<f64>,
}

impl TrainLog {
    /// Mean of the finite trimmed block losses among the first `n_blocks`.
    pub fn mean_trimmed(&self, n_blocks: usize) -> f64 {
        let v: Vec<f64> = self.trimmed_block_losses.iter().take(n_blocks).copied().filter(|x| x.is_finite()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Online training: one Adam step per window, in sequence order. The task input
/// for a window is the label of the observation being predicted.
pub fn train_toy(config: &SeqModelConfig, data: &BlockSequence, z_source: ZSource, seed: u64) -> Result<(Lstm, TrainLog)> {
    if data.block_boundaries.is_empty() || data.is_empty() {
        return Err(Error::invalid("training data has no blocks"));
    }
    if data.len() < config.history + 1 {
        return Err(Error::invalid(format!(
            "training data has {} steps, needs at least history+1 = {}",
            data.len(),
            config.history + 1
        )));
    }
    let config = SeqModelConfig {
        has_task_input: z_source == ZSource::GroundTruth,
        ..config.clone()
    };
    let mut model = Lstm::new(config.clone(), seed)?;
    let mut opt = Adam::new(AdamConfig::new(config.lr));
    let (windows, targets) = ToyBatch::windows(&data.observations, config.history);
    let mut step_losses = Vec::with_capacity(windows.len());
    for (i, &t) in targets.iter().enumerate() {
        let sample = ToyBatch::single(&windows.histories[i], windows.targets[i]);
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape, true);
        let z = match z_source {
            ZSource::GroundTruth => Some(tape.constant(model.sharpened_rows(&[data.z_true[t]])?)),
            ZSource::None => None,
        };
        let out = model.forward(&mut tape, &p, &sample, z)?;
        let loss = model.batch_nll(&mut tape, &out, &sample)?;
        step_losses.push(tape.value(loss).item() as f64);
        let g = tape.backward(loss)?;
        let grads = p.grads(&g, &model.params);
        opt.step(model.params.tensors_mut(), &grads);
    }
    let log = block_summary(step_losses, &targets, data, config.trim);
    Ok((model, log))
}

fn block_summary(step_losses: Vec<f64>, targets: &[usize], data: &BlockSequence, trim: usize) -> TrainLog {
    let blocks = data.blocks();
    let mut sums = vec![(0.0, 0usize, 0.0, 0usize); blocks.len()];
    let mut b = 0;
    for (&loss, &t) in step_losses.iter().zip(targets) {
        while t >= blocks[b].1 {
            b += 1;
        }
        let s = &mut sums[b];
        s.0 += loss;
        s.1 += 1;
        if t >= blocks[b].0 + trim {
            s.2 += loss;
            s.3 += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    TrainLog {
        block_losses: sums.iter().filter(|s| s.1 > 0).map(|s| mean(s.0, s.1)).collect(),
        trimmed_block_losses: sums.iter().filter(|s| s.1 > 0).map(|s| mean(s.2, s.3)).collect(),
        step_losses,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskVariance {
    /// `per_unit[k][j]`: variance of hidden unit `j` over samples of task `k`.
    pub per_unit: Vec<Vec<f64>>,
    pub active: Vec<Vec<usize>>,
    /// Jaccard overlap of the two tasks' active sets.
    pub shared_ratio: f64,
}

/// Variance of every hidden unit within each task's samples, and the overlap of
/// the top-`q` most variable units between the two tasks.
pub fn task_variance(hidden_by_task: &[Tensor; 2], q: f64) -> Result<TaskVariance> {
    if hidden_by_task.iter().any(|t| t.rank() != 2 || t.shape()[0] == 0) {
        return Err(Error::invalid("task_variance needs samples for both tasks"));
    }
    let units = hidden_by_task[0].shape()[1];
    if hidden_by_task[1].shape()[1] != units {
        return Err(Error::invalid("hidden sizes differ between tasks"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("active fraction must lie in (0, 1], got {q}")));
    }
    let k = ((q * units as f64).round() as usize).clamp(1, units);
    let mut per_unit = Vec::new();
    let mut active = Vec::new();
    for t in hidden_by_task {
        let n = t.shape()[0] as f64;
        let var: Vec<f64> = (0..units)
            .map(|j| {
                let col = (0..t.shape()[0]).map(|i| t.row(i)[j] as f64);
                let m = col.clone().sum::<f64>() / n;
                col.map(|v| (v - m).powi(2)).sum::<f64>() / n
            })
            .collect();
        let mut order: Vec<usize> = (0..units).collect();
        // Ties broken by unit index so the active set is deterministic.
        order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
        let mut top = order[..k].to_vec();
        top.sort_unstable();
        per_unit.push(var);
        active.push(top);
    }
    let inter = active[0].iter().filter(|u| active[1].binary_search(u).is_ok()).count();
    let union = 2 * k - inter;
    Ok(TaskVariance {
        per_unit,
        active,
        shared_ratio: inter as f64 / union as f64,
    })
}

/// Hidden states of `model` on every window of `data`, split by the task of the
/// predicted observation. Task-aware models see the sharpened true label.
pub fn hidden_by_task(model: &Lstm, data: &BlockSequence) -> Result<[Tensor; 2]> {
    let (windows, targets) = ToyBatch::windows(&data.observations, model.config.history);
    let mut parts: [Vec<Vec<f32>>; 2] = [Vec::new(), Vec::new()];
    for chunk in (0..windows.len()).collect::<Vec<_>>().chunks(256) {
        let batch = ToyBatch {
            histories: chunk.iter().map(|&i| windows.histories[i].clone()).collect(),
            targets: chunk.iter().map(|&i| windows.targets[i]).collect(),
        };
        let labels: Vec<usize> = chunk.iter().map(|&i| data.z_true[targets[i]]).collect();
        let z = if model.config.has_task_input {
            Some(model.sharpened_rows(&labels)?)
        } else {
            None
        };
        let h = model.hidden_states(&batch, z.as_ref())?;
        for (r, &l) in labels.iter().enumerate() {
            parts[l.min(1)].push(h.row(r).to_vec());
        }
    }
    let [a, b] = parts;
    Ok([Tensor::from_rows(&a)?, Tensor::from_rows(&b)?])
}
