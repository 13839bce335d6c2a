use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::models::{one_hot_rows, ConvAutoencoder, ConvClassifier};
use super::{CLASSES, PIXELS, SIDE};
use crate::error::{Error, Result};
use crate::gbi::{self, argmax, InferenceConfig, TaskModel};
use crate::kernels;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Images with their encoder latents precomputed; the latent does not depend
/// on the class input, so inference only runs the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub images: Tensor,
    pub latent: Tensor,
}

impl ImageBatch {
    pub fn new(model: &ConvAutoencoder, images: Tensor) -> Result<Self> {
        let mut tape = Tape::new();
        let b = model.params.bind(&mut tape, false);
        let x = tape.constant(images.clone());
        let l = model.encode(&mut tape, &b, x)?;
        Ok(ImageBatch {
            latent: tape.value(l).clone(),
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.latent.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ConvAutoencoder {
    /// Sum over images of the per-image mean squared reconstruction error.
    fn class_loss(&self, tape: &mut Tape, batch: &ImageBatch, class: Var) -> Result<Var> {
        let b = self.params.bind(tape, false);
        let latent = tape.constant(batch.latent.clone());
        let y = self.decode(tape, &b, latent, Some(class))?;
        let target = tape.constant(batch.images.clone());
        let d = tape.sub(y, target)?;
        let sq = tape.square(d);
        let s = tape.sum(sq);
        Ok(tape.scale(s, 1.0 / PIXELS as f32))
    }
}

impl TaskModel for ConvAutoencoder {
    type Batch = ImageBatch;

    fn task_dim(&self) -> usize {
        self.class_dim()
    }

    fn batch_size(&self, batch: &ImageBatch) -> usize {
        batch.len()
    }

    fn task_loss(&self, tape: &mut Tape, batch: &ImageBatch, task_probs: Var) -> Result<Var> {
        self.class_loss(tape, batch, task_probs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// One gradient step from the uniform class belief.
    Gbi,
    /// GBI initialisation followed by this many Adam steps on the belief.
    Iterative(usize),
    /// Decoder error under each of the 10 one-hot labels.
    Likelihood,
    /// Gradient norm at each of the 10 one-hot labels.
    Nbi,
    /// Separate convolutional classifier.
    Discriminative,
}

impl Method {
    /// Passes through the network per inference.
    pub fn runs(self) -> usize {
        match self {
            Method::Gbi | Method::Discriminative => 1,
            Method::Iterative(n) => n,
            Method::Likelihood | Method::Nbi => CLASSES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Gbi => "gbi",
            Method::Iterative(_) => "iterative",
            Method::Likelihood => "likelihood",
            Method::Nbi => "nbi",
            Method::Discriminative => "discriminative",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Iterative(n) => write!(f, "iterative({n})"),
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `gbi`, `likelihood`, `nbi`, `discriminative`, `iterative` (50 steps) or `iterative(N)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "gbi" => Method::Gbi,
            "likelihood" => Method::Likelihood,
            "nbi" => Method::Nbi,
            "discriminative" => Method::Discriminative,
            "iterative" => Method::Iterative(50),
            _ => {
                let n = s
                    .strip_prefix("iterative(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))?;
                Method::Iterative(n)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: usize,
    /// Belief probabilities (gbi, iterative, discriminative), per-label MSE
    /// (likelihood) or per-label gradient norm (nbi).
    pub scores: Vec<f32>,
    pub runs: usize,
}

fn from_beliefs(beliefs: &[gbi::TaskBelief], runs: usize) -> Vec<Classification> {
    beliefs
        .iter()
        .map(|b| Classification {
            class: b.argmax(),
            scores: b.probs(),
            runs,
        })
        .collect()
}

fn argmin(v: &[f32]) -> usize {
    let neg: Vec<f32> = v.iter().map(|x| -x).collect();
    argmax(&neg)
}

/// Loss and `∂L/∂p` per image with the class input fixed to `probs`.
fn grad_at_probs(model: &ConvAutoencoder, batch: &ImageBatch, probs: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = tape.variable(probs.clone());
    let loss = model.class_loss(&mut tape, batch, p)?;
    let g = tape.backward(loss)?;
    Ok(g.get_or_zeros(p, probs.shape()))
}

/// Decoder MSE of every image under every one-hot label, `[N][10]`.
pub fn label_mse(model: &ConvAutoencoder, batch: &ImageBatch, order: &[usize]) -> Result<Vec<Vec<f32>>> {
    let n = batch.len();
    let mut out = vec![vec![0.0f32; CLASSES]; n];
    for &l in order {
        let c = one_hot_rows(&vec![l; n], CLASSES);
        let mut tape = Tape::new();
        let b = model.params.bind(&mut tape, false);
        let latent = tape.constant(batch.latent.clone());
        let cv = tape.constant(c);
        let y = model.decode(&mut tape, &b, latent, Some(cv))?;
        let sse = super::models::per_image_sse(tape.value(y).data(), batch.images.data());
        for (row, s) in out.iter_mut().zip(sse) {
            row[l] = (s / PIXELS as f64) as f32;
        }
    }
    Ok(out)
}

/// Classifies every image of `images` (`[N, 1, 28, 28]`).
pub fn classify_batch(
    model: &ConvAutoencoder,
    classifier: Option<&ConvClassifier>,
    images: &Tensor,
    method: Method,
    config: &InferenceConfig,
) -> Result<Vec<Classification>> {
    if method == Method::Discriminative {
        let clf = classifier.ok_or_else(|| Error::invalid("discriminative method needs a classifier"))?;
        let logits = clf.predict_logits(images)?;
        return Ok((0..logits.shape()[0])
            .map(|i| Classification {
                class: argmax(logits.row(i)),
                scores: kernels::softmax(logits.row(i), &[CLASSES], 0, false),
                runs: 1,
            })
            .collect());
    }
    if model.class_dim() != CLASSES {
        return Err(Error::invalid("class inference needs a label-conditioned autoencoder"));
    }
    let batch = ImageBatch::new(model, images.clone())?;
    let n = batch.len();
    match method {
        Method::Gbi => Ok(from_beliefs(&gbi::one_step_infer(model, &batch, config)?, 1)),
        Method::Iterative(steps) => {
            let init = gbi::one_step_infer(model, &batch, config)?;
            let cfg = InferenceConfig {
                iter_steps: steps,
                ..config.clone()
            };
            let trace = gbi::iterative_optimize(model, &batch, &init, &cfg)?;
            Ok(from_beliefs(&trace.final_beliefs(), steps))
        }
        Method::Likelihood => {
            let mse = label_mse(model, &batch, &(0..CLASSES).collect::<Vec<_>>())?;
            Ok(mse
                .into_iter()
                .map(|m| Classification {
                    class: argmin(&m),
                    scores: m,
                    runs: CLASSES,
                })
                .collect())
        }
        Method::Nbi => {
            let mut norms = vec![vec![0.0f32; CLASSES]; n];
            for l in 0..CLASSES {
                let g = grad_at_probs(model, &batch, &one_hot_rows(&vec![l; n], CLASSES))?;
                for (i, row) in norms.iter_mut().enumerate() {
                    row[l] = g.row(i).iter().map(|v| v * v).sum::<f32>().sqrt();
                }
            }
            Ok(norms
                .into_iter()
                .map(|m| Classification {
                    class: argmin(&m),
                    scores: m,
                    runs: CLASSES,
                })
                .collect())
        }
        Method::Discriminative => unreachable!(),
    }
}

pub fn classify(
    model: &ConvAutoencoder,
    classifier: Option<&ConvClassifier>,
    image: &[f32],
    method: Method,
    config: &InferenceConfig,
) -> Result<Classification> {
    let t = single_image(image)?;
    Ok(classify_batch(model, classifier, &t, method, config)?.remove(0))
}

fn single_image(image: &[f32]) -> Result<Tensor> {
    Tensor::new(vec![1, 1, SIDE, SIDE], image.to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OodStatistic {
    /// Largest one-step belief logit.
    BeliefMax,
    /// Negated smallest gradient at the class input.
    NegMinGradient,
}

/// In-distribution score per image; higher means more typical.
pub fn ood_scores(model: &ConvAutoencoder, images: &Tensor, stat: OodStatistic, config: &InferenceConfig) -> Result<Vec<f64>> {
    let batch = ImageBatch::new(model, images.clone())?;
    let step = gbi::one_step(model, &batch, config)?;
    Ok((0..batch.len())
        .map(|i| match stat {
            OodStatistic::BeliefMax => step.beliefs[i].logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64,
            OodStatistic::NegMinGradient => -(step.gradient.grad_probs.row(i).iter().fold(f32::INFINITY, |a, &b| a.min(b)) as f64),
        })
        .collect())
}

pub fn ood_score(model: &ConvAutoencoder, image: &[f32], config: &InferenceConfig) -> Result<f64> {
    Ok(ood_scores(model, &single_image(image)?, OodStatistic::BeliefMax, config)?[0])
}

/// Classifier baselines: maximum softmax probability and maximum logit.
pub fn classifier_ood_scores(classifier: &ConvClassifier, images: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let logits = classifier.predict_logits(images)?;
    let n = logits.shape()[0];
    let softmax_max = (0..n)
        .map(|i| kernels::softmax(logits.row(i), &[CLASSES], 0, false).into_iter().fold(0.0f32, f32::max) as f64)
        .collect();
    let logit_max = (0..n).map(|i| logits.row(i).iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64).collect();
    Ok((softmax_max, logit_max))
}

/// Decoder output for the encoder latent of `image` with the class input
/// forced to `label`, in the model's normalized pixel space.
pub fn conditional_generate(model: &ConvAutoencoder, image: &[f32], forced_label: usize) -> Result<Vec<f32>> {
    Ok(conditional_generate_all(model, image, &[forced_label])?.remove(0))
}

pub fn conditional_generate_all(model: &ConvAutoencoder, image: &[f32], labels: &[usize]) -> Result<Vec<Vec<f32>>> {
    if let Some(&l) = labels.iter().find(|&&l| l >= model.class_dim()) {
        return Err(Error::invalid(format!("label {l} out of range 0..{}", model.class_dim())));
    }
    let n = labels.len();
    let mut images = Vec::with_capacity(n * PIXELS);
    for _ in 0..n {
        images.extend_from_slice(image);
    }
    let images = Tensor::new(vec![n, 1, SIDE, SIDE], images)?;
    let batch = ImageBatch::new(model, images)?;
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, false);
    let latent = tape.constant(batch.latent.clone());
    let c = tape.constant(one_hot_rows(labels, CLASSES));
    let y = model.decode(&mut tape, &b, latent, Some(c))?;
    Ok(tape.value(y).data().chunks(PIXELS).map(<[f32]>::to_vec).collect())
}
