//! Gradient-based inference of task abstractions through a frozen model.
//!
//! Beliefs live in logit space; the model always sees `softmax(logits)`. The
//! maximal-entropy belief is all-zero logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels;
use crate::optim::{Adam, AdamConfig, Optimizer};
use crate::seq_model::{Lstm, ToyBatch};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A model whose loss depends on a task-abstraction input.
pub trait TaskModel {
    type Batch: ?Sized;

    /// Number of task units; 0 when the model has no task input.
    fn task_dim(&self) -> usize;

    fn batch_size(&self, batch: &Self::Batch) -> usize;

    /// Scalar loss given task probabilities `task_probs` of shape `[B × K]`.
    /// Must be a sum of per-sample terms, each depending only on its own row,
    /// and must put the model parameters on the tape as constants.
    fn task_loss(&self, tape: &mut Tape, batch: &Self::Batch, task_probs: Var) -> Result<Var>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskBelief {
    pub logits: Vec<f32>,
}

impl TaskBelief {
    pub fn uniform(k: usize) -> Self {
        TaskBelief { logits: vec![0.0; k] }
    }

    pub fn probs(&self) -> Vec<f32> {
        kernels::softmax(&self.logits, &[self.logits.len()], 0, false)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }

    /// Shannon entropy of `probs()` in nats.
    pub fn entropy(&self) -> f64 {
        self.probs().iter().filter(|&&p| p > 0.0).map(|&p| -(p as f64) * (p as f64).ln()).sum()
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Stacks beliefs into a `[B × K]` logit tensor.
pub fn stack(beliefs: &[TaskBelief]) -> Result<Tensor> {
    let rows: Vec<Vec<f32>> = beliefs.iter().map(|b| b.logits.clone()).collect();
    Tensor::from_rows(&rows)
}

pub fn unstack(logits: &Tensor) -> Vec<TaskBelief> {
    (0..logits.shape()[0]).map(|i| TaskBelief { logits: logits.row(i).to_vec() }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// One-step learning rate.
    pub gamma: f32,
    /// Entropy weight. Its gradient vanishes at the uniform belief, so the
    /// one-step update ignores it; iterative optimisation uses `iter_l2` instead.
    pub alpha: f32,
    pub iter_lr: f32,
    pub iter_l2: f32,
    pub iter_steps: usize,
    pub engaged_lr: f32,
    /// Iterative optimisation aborts once the loss exceeds this multiple of
    /// the magnitude of the initial loss.
    pub divergence_factor: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            gamma: 1.0,
            alpha: 0.0,
            iter_lr: 0.01,
            iter_l2: 0.01,
            iter_steps: 50,
            engaged_lr: 0.5,
            divergence_factor: 10.0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.iter_steps == 0 {
            return Err(Error::invalid("iter_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Loss and belief gradients at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefGradient {
    pub loss: f64,
    pub probs: Tensor,
    /// ∂L/∂logits, `[B × K]`.
    pub grad_logits: Tensor,
    /// ∂L/∂probs, `[B × K]`: the gradient at the model's task input.
    pub grad_probs: Tensor,
}

fn require_task<M: TaskModel>(model: &M) -> Result<usize> {
    match model.task_dim() {
        0 => Err(Error::invalid("model has no task-abstraction input")),
        k => Ok(k),
    }
}

pub fn belief_gradient<M: TaskModel>(model: &M, batch: &M::Batch, logits: &Tensor) -> Result<BeliefGradient> {
    let k = require_task(model)?;
    let n = model.batch_size(batch);
    if logits.shape() != [n, k] {
        return Err(Error::InvalidShape {
            op: "belief",
            msg: format!("belief logits {:?}, expected [{n}, {k}]", logits.shape()),
        });
    }
    let mut tape = Tape::new();
    let l = tape.variable(logits.clone());
    let p = tape.softmax(l, 1)?;
    let loss = model.task_loss(&mut tape, batch, p)?;
    let g = tape.backward(loss)?;
    Ok(BeliefGradient {
        loss: tape.value(loss).item() as f64,
        probs: tape.value(p).clone(),
        grad_logits: g.get_or_zeros(l, &[n, k]),
        grad_probs: g.get_or_zeros(p, &[n, k]),
    })
}

/// Result of a one-step update from the maximal-entropy belief.
#[derive(Clone, Debug, PartialEq)]
pub struct OneStep {
    pub beliefs: Vec<TaskBelief>,
    pub gradient: BeliefGradient,
}

/// `softmax(0 − γ·∂L/∂logits)` per sample, starting from uniform logits.
pub fn one_step<M: TaskModel>(model: &M, batch: &M::Batch, config: &InferenceConfig) -> Result<OneStep> {
    config.validate()?;
    let k = require_task(model)?;
    let n = model.batch_size(batch);
    let gradient = belief_gradient(model, batch, &Tensor::zeros(vec![n, k]))?;
    let updated = gradient.grad_logits.map(|g| -config.gamma * g);
    Ok(OneStep {
        beliefs: unstack(&updated),
        gradient,
    })
}

pub fn one_step_infer<M: TaskModel>(model: &M, batch: &M::Batch, config: &InferenceConfig) -> Result<Vec<TaskBelief>> {
    Ok(one_step(model, batch, config)?.beliefs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterativeTrace {
    /// Logits `[B × K]` before the first step and after each step.
    pub logits: Vec<Tensor>,
    /// Batch loss at each entry of `logits`.
    pub losses: Vec<f64>,
}

impl IterativeTrace {
    pub fn final_beliefs(&self) -> Vec<TaskBelief> {
        unstack(self.logits.last().expect("trace includes the initial point"))
    }
}

/// Adam on the belief logits with L2 `iter_l2`, for `iter_steps` steps.
pub fn iterative_optimize<M: TaskModel>(
    model: &M,
    batch: &M::Batch,
    init: &[TaskBelief],
    config: &InferenceConfig,
) -> Result<IterativeTrace> {
    config.validate()?;
    let mut logits = vec![stack(init)?];
    let mut adam = Adam::new(AdamConfig::new(config.iter_lr).with_weight_decay(config.iter_l2));
    let first = belief_gradient(model, batch, &logits[0])?;
    let limit = config.divergence_factor * first.loss.abs();
    let mut losses = vec![first.loss];
    let mut grad = first.grad_logits;
    for _ in 0..config.iter_steps {
        let mut cur = vec![logits.last().expect("non-empty").clone()];
        adam.step(&mut cur, std::slice::from_ref(&grad));
        let cur = cur.pop().expect("one tensor");
        let g = belief_gradient(model, batch, &cur)?;
        if !g.loss.is_finite() || (g.loss > first.loss && g.loss > limit) {
            return Err(Error::Diverged { loss: g.loss, limit });
        }
        losses.push(g.loss);
        grad = g.grad_logits;
        logits.push(cur);
    }
    Ok(IterativeTrace { logits, losses })
}

/// Surrogate evidence `Σ_z p_z · ∂L/∂p_z`, left unnormalized. Poorly explained
/// data pulls the belief past its current extreme, which makes the sum
/// strongly negative.
pub fn neural_evidence(z_min: &[f32], z_gradient: &[f32]) -> f64 {
    z_min.iter().zip(z_gradient).map(|(&p, &g)| p as f64 * g as f64).sum::<f64>()
}

/// One row of a streamed run over the toy task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamStep {
    /// Index of the predicted observation.
    pub step: usize,
    pub x: f64,
    pub pred_mean: f64,
    pub pred_sigma: f64,
    /// Belief probabilities reported for this step.
    pub z: [f64; 2],
    /// ∂L/∂p at the model's task input.
    pub grad_z: [f64; 2],
    pub evidence: f64,
}

pub const TRAJECTORY_HEADER: &str = "step,x,pred_mean,pred_sigma,z0,z1,grad_z0,grad_z1,evidence";

impl StreamStep {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step, self.x, self.pred_mean, self.pred_sigma, self.z[0], self.z[1], self.grad_z[0], self.grad_z[1], self.evidence
        )
    }
}

pub fn write_trajectory(w: &mut impl std::io::Write, steps: &[StreamStep]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in steps {
        writeln!(w, "{}", s.csv_row())?;
    }
    Ok(())
}

fn two(v: &[f32]) -> [f64; 2] {
    [v[0] as f64, v[1] as f64]
}

fn check_binary(model: &Lstm) -> Result<()> {
    match model.task_dim() {
        2 => Ok(()),
        0 => Err(Error::invalid("model has no task-abstraction input")),
        k => Err(Error::invalid(format!("streaming runs need 2 task units, model has {k}"))),
    }
}

/// Task-engaged mode: a persistent belief predicts each next observation, then
/// takes one plain gradient step of size `engaged_lr` on that prediction's loss.
pub fn engaged_mode_run(model: &Lstm, obs: &[f64], config: &InferenceConfig, init: &TaskBelief) -> Result<Vec<StreamStep>> {
    check_binary(model)?;
    let (windows, targets) = ToyBatch::windows(obs, model.config.history);
    let mut logits = stack(std::slice::from_ref(init))?;
    let mut out = Vec::with_capacity(targets.len());
    for (i, &t) in targets.iter().enumerate() {
        let sample = ToyBatch::single(&windows.histories[i], windows.targets[i]);
        let probs = kernels::softmax(logits.data(), logits.shape(), 1, false);
        let pred = model.predict(&sample, Some(&Tensor::new(vec![1, 2], probs.clone())?))?[0];
        let g = belief_gradient(model, &sample, &logits)?;
        out.push(StreamStep {
            step: t,
            x: obs[t],
            pred_mean: pred.mean as f64,
            pred_sigma: pred.sigma as f64,
            z: two(&probs),
            grad_z: two(g.grad_probs.data()),
            evidence: neural_evidence(&probs, g.grad_probs.data()),
        });
        let lr = config.engaged_lr;
        logits = Tensor::new(
            vec![1, 2],
            logits.data().iter().zip(g.grad_logits.data()).map(|(w, d)| w - lr * d).collect(),
        )?;
    }
    Ok(out)
}

/// Default mode: every step starts from the uniform belief and reports the
/// one-step belief. Predictions are made at the uniform belief.
pub fn default_mode_run(model: &Lstm, obs: &[f64], config: &InferenceConfig) -> Result<Vec<StreamStep>> {
    check_binary(model)?;
    let (windows, targets) = ToyBatch::windows(obs, model.config.history);
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let step = one_step(model, &windows, config)?;
    let preds = model.predict(&windows, Some(&step.gradient.probs))?;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let gp = step.gradient.grad_probs.row(i);
            StreamStep {
                step: t,
                x: obs[t],
                pred_mean: preds[i].mean as f64,
                pred_sigma: preds[i].sigma as f64,
                z: two(&step.beliefs[i].probs()),
                grad_z: two(gp),
                evidence: neural_evidence(step.gradient.probs.row(i), gp),
            }
        })
        .collect())
}

/// How the task input is driven during a generalization evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    /// Engaged-mode inference from the uniform belief.
    Engaged,
    /// Model without task input.
    Baseline,
    /// Task input clamped to the sharpened one-hot of this hypothesis.
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mean: f64,
    pub mse: f64,
}

/// Mean squared error of the next-observation predictions over the last
/// `tail` predictions of each sweep sequence.
pub fn generalization_eval(
    model: &Lstm,
    sweep: &[(f64, Vec<f64>)],
    mode: EvalMode,
    config: &InferenceConfig,
    tail: usize,
) -> Result<Vec<SweepResult>> {
    let mut out = Vec::with_capacity(sweep.len());
    for (mean, obs) in sweep {
        let preds: Vec<(usize, f64)> = match mode {
            EvalMode::Engaged => engaged_mode_run(model, obs, config, &TaskBelief::uniform(2))?
                .into_iter()
                .map(|s| (s.step, s.pred_mean))
                .collect(),
            EvalMode::Baseline | EvalMode::Fixed(_) => {
                let (w, targets) = ToyBatch::windows(obs, model.config.history);
                let z = match mode {
                    EvalMode::Fixed(h) => {
                        check_binary(model)?;
                        Some(model.sharpened_rows(&vec![h; w.len()])?)
                    }
                    _ => None,
                };
                let p = model.predict(&w, z.as_ref())?;
                targets.into_iter().zip(p).map(|(t, p)| (t, p.mean as f64)).collect()
            }
        };
        if preds.is_empty() {
            return Err(Error::invalid("sweep sequence shorter than the model history"));
        }
        let from = preds.len().saturating_sub(tail.max(1));
        let tailp = &preds[from..];
        let mse = tailp.iter().map(|&(t, m)| (obs[t] - m).powi(2)).sum::<f64>() / tailp.len() as f64;
        out.push(SweepResult { mean: *mean, mse });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Loss `Σ_b Σ_k c_k · p_bk`: gradient w.r.t. the probabilities is `c`.
    struct Linear(Vec<f32>);

    impl TaskModel for Linear {
        type Batch = usize;
        fn task_dim(&self) -> usize {
            self.0.len()
        }
        fn batch_size(&self, b: &usize) -> usize {
            *b
        }
        fn task_loss(&self, tape: &mut Tape, b: &usize, p: Var) -> Result<Var> {
            let k = self.0.len();
            let c = tape.constant(Tensor::new(vec![*b, k], self.0.repeat(*b))?);
            let m = tape.mul(p, c)?;
            Ok(tape.sum(m))
        }
    }

    /// `Σ (p − target)²`: stationary at `p = target`.
    struct Quadratic(Vec<f32>);

    impl TaskModel for Quadratic {
        type Batch = ();
        fn task_dim(&self) -> usize {
            self.0.len()
        }
        fn batch_size(&self, _: &()) -> usize {
            1
        }
        fn task_loss(&self, tape: &mut Tape, _: &(), p: Var) -> Result<Var> {
            let t = tape.constant(Tensor::new(vec![1, self.0.len()], self.0.clone())?);
            let d = tape.sub(p, t)?;
            let s = tape.square(d);
            Ok(tape.sum(s))
        }
    }

    #[test]
    fn zero_gradient_gives_uniform() {
        let b = one_step_infer(&Linear(vec![0.0, 0.0, 0.0]), &2, &InferenceConfig::default()).unwrap();
        for belief in b {
            for p in belief.probs() {
                assert!((p - 1.0 / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn favours_the_loss_lowering_hypothesis() {
        for g in [0.01f32, 1.0, 50.0] {
            let b = one_step_infer(&Linear(vec![-g, g]), &1, &InferenceConfig::default()).unwrap();
            assert!(b[0].probs()[0] > 0.5);
        }
    }

    #[test]
    fn stationary_at_optimum() {
        let model = Quadratic(vec![0.5, 0.5]);
        let cfg = InferenceConfig {
            iter_steps: 10,
            iter_l2: 0.0,
            ..Default::default()
        };
        let tr = iterative_optimize(&model, &(), &[TaskBelief::uniform(2)], &cfg).unwrap();
        assert_eq!(tr.logits.len(), 11);
        assert_eq!(tr.losses.len(), 11);
        for l in &tr.logits {
            assert!(l.data().iter().all(|v| v.abs() <= cfg.iter_lr));
        }
    }

    #[test]
    fn evidence_of_zero_gradient() {
        assert_eq!(neural_evidence(&[0.3, 0.7], &[0.0, 0.0]), 0.0);
        assert!((neural_evidence(&[0.5, 0.5], &[1.0, 3.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_task_free_model() {
        assert!(one_step_infer(&Linear(vec![]), &1, &InferenceConfig::default()).is_err());
    }
}
