use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{LabeledImageSet, Normalization, CLASSES, PIXELS, SIDE};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig, Optimizer};
use crate::params::{Bound, ParamId, ParamSet};
use crate::rng::{self, SimRng};
use crate::tape::{ConvParams, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            lr: 1e-3,
            batch: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    pub class_dim: usize,
    /// Whether the decoder receives the class input.
    pub conditional: bool,
    pub train: TrainConfig,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            latent_dim: 8,
            class_dim: CLASSES,
            conditional: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Width of a ReLU hidden layer between the embedding and the logits; 0 for
    /// a single linear layer.
    pub head_hidden: usize,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Classifier only.
    pub val_accuracy: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ConvLayer {
    w: ParamId,
    b: ParamId,
    p: ConvParams,
    /// `Some(output_padding)` for a transposed convolution.
    transpose: Option<usize>,
    relu: bool,
}

impl ConvLayer {
    /// Uniform `±1/√fan_in` init for weights and bias. Transposed weights are
    /// `[C_in, C_out, k, k]`.
    fn new(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, k: usize, p: ConvParams, transpose: Option<usize>, relu: bool, r: &mut SimRng) -> Self {
        let (shape, fan_in) = match transpose {
            None => ([cout, cin, k, k], cin * k * k),
            Some(_) => ([cin, cout, k, k], cout * k * k),
        };
        let bound = 1.0 / (fan_in as f32).sqrt();
        let w = ps.add_uniform(&format!("{name}.w"), &shape, bound, r);
        let b = ps.add_uniform(&format!("{name}.b"), &[cout], bound, r);
        ConvLayer { w, b, p, transpose, relu }
    }

    fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = match self.transpose {
            None => tape.conv2d(x, bound.var(self.w), self.p)?,
            Some(op) => tape.conv2d_transpose(x, bound.var(self.w), self.p, op)?,
        };
        let y = tape.add_channel(y, bound.var(self.b))?;
        Ok(if self.relu { tape.relu(y) } else { y })
    }
}

const S2: ConvParams = ConvParams { stride: 2, padding: 1 };
const S1: ConvParams = ConvParams { stride: 1, padding: 0 };

/// Conv 1→2 (k3 s2 p1) → ReLU → conv 2→4 (k3 s2 p1) → ReLU → conv 4→latent (k7):
/// 28×28 → 14×14 → 7×7 → 1×1, flattened.
fn backbone(ps: &mut ParamSet, prefix: &str, latent: usize, r: &mut SimRng) -> [ConvLayer; 3] {
    [
        ConvLayer::new(ps, &format!("{prefix}.conv1"), 1, 2, 3, S2, None, true, r),
        ConvLayer::new(ps, &format!("{prefix}.conv2"), 2, 4, 3, S2, None, true, r),
        ConvLayer::new(ps, &format!("{prefix}.conv3"), 4, latent, 7, S1, None, false, r),
    ]
}

fn run_backbone(layers: &[ConvLayer; 3], tape: &mut Tape, bound: &Bound, images: Var) -> Result<Var> {
    let n = tape.shape(images)[0];
    let mut h = images;
    for l in layers {
        h = l.apply(tape, bound, h)?;
    }
    let c = tape.shape(h)[1];
    tape.reshape(h, &[n, c])
}

fn image_tensor_check(tape: &Tape, images: Var) -> Result<usize> {
    let s = tape.shape(images);
    if s.len() != 4 || s[1..] != [1, SIDE, SIDE] {
        return Err(Error::InvalidShape {
            op: "vision",
            msg: format!("images must be [N, 1, 28, 28], got {s:?}"),
        });
    }
    Ok(s[0])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvAutoencoder {
    pub config: AutoencoderConfig,
    pub params: ParamSet,
    pub normalization: Normalization,
    encoder: [ConvLayer; 3],
    decoder: [ConvLayer; 3],
}

impl ConvAutoencoder {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        if config.latent_dim != 8 {
            return Err(Error::invalid(format!("latent_dim must be 8, got {}", config.latent_dim)));
        }
        let mut r = rng::stream(seed, 0xAE);
        let mut params = ParamSet::new();
        let encoder = backbone(&mut params, "enc", config.latent_dim, &mut r);
        let dec_in = config.latent_dim + if config.conditional { config.class_dim } else { 0 };
        let decoder = [
            ConvLayer::new(&mut params, "dec.conv1", dec_in, 4, 7, S1, Some(0), true, &mut r),
            ConvLayer::new(&mut params, "dec.conv2", 4, 2, 3, S2, Some(1), true, &mut r),
            ConvLayer::new(&mut params, "dec.conv3", 2, 1, 3, S2, Some(1), false, &mut r),
        ];
        Ok(ConvAutoencoder {
            config,
            params,
            normalization: Normalization::Raw,
            encoder,
            decoder,
        })
    }

    pub fn class_dim(&self) -> usize {
        if self.config.conditional {
            self.config.class_dim
        } else {
            0
        }
    }

    /// `[N, 1, 28, 28]` → `[N, latent]`.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, images: Var) -> Result<Var> {
        image_tensor_check(tape, images)?;
        run_backbone(&self.encoder, tape, bound, images)
    }

    /// `[N, latent]` (+ `[N, classes]`) → `[N, 1, 28, 28]`.
    pub fn decode(&self, tape: &mut Tape, bound: &Bound, latent: Var, class: Option<Var>) -> Result<Var> {
        let n = tape.shape(latent)[0];
        let z = match (self.config.conditional, class) {
            (true, Some(c)) => tape.concat_cols(&[latent, c])?,
            (false, None) => latent,
            (true, None) => return Err(Error::invalid("conditional decoder needs a class input")),
            (false, Some(_)) => return Err(Error::invalid("unconditional decoder takes no class input")),
        };
        let width = tape.shape(z)[1];
        let mut h = tape.reshape(z, &[n, width, 1, 1])?;
        for l in &self.decoder {
            h = l.apply(tape, bound, h)?;
        }
        Ok(h)
    }

    pub fn reconstruct(&self, tape: &mut Tape, bound: &Bound, images: Var, class: Option<Var>) -> Result<Var> {
        let latent = self.encode(tape, bound, images)?;
        self.decode(tape, bound, latent, class)
    }

    /// Per-image mean squared reconstruction error for fixed class inputs.
    pub fn per_image_mse(&self, images: &Tensor, class: Option<&Tensor>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(images.clone());
        let c = class.map(|c| tape.constant(c.clone()));
        let y = self.reconstruct(&mut tape, &b, x, c)?;
        Ok(per_image_sse(tape.value(y).data(), images.data()).into_iter().map(|s| s / PIXELS as f64).collect())
    }

    pub fn to_checkpoint(&self, mut metadata: serde_json::Value) -> Checkpoint {
        if let serde_json::Value::Object(m) = &mut metadata {
            m.insert("model".into(), "autoencoder".into());
            m.insert("config".into(), serde_json::to_value(&self.config).expect("config serializes"));
            m.insert("normalization".into(), serde_json::to_value(self.normalization).expect("serializes"));
        }
        Checkpoint::new(self.params.to_named(), metadata)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_model(ckpt, "autoencoder")?;
        let mut m = ConvAutoencoder::new(meta_field(ckpt, "config")?, 0)?;
        m.normalization = meta_field(ckpt, "normalization")?;
        m.params.load_from(&ckpt.tensors)?;
        Ok(m)
    }
}

fn expect_model(ckpt: &Checkpoint, kind: &str) -> Result<()> {
    match ckpt.metadata.get("model").and_then(|v| v.as_str()) {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {other:?}"))),
    }
}

fn meta_field<T: serde::de::DeserializeOwned>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    let v = ckpt.metadata.get(key).cloned().ok_or_else(|| Error::Checkpoint(format!("missing metadata field {key}")))?;
    Ok(serde_json::from_value(v)?)
}

pub(crate) fn per_image_sse(recon: &[f32], target: &[f32]) -> Vec<f64> {
    recon
        .chunks(PIXELS)
        .zip(target.chunks(PIXELS))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum())
        .collect()
}

pub fn one_hot_rows(labels: &[usize], k: usize) -> Tensor {
    let mut d = vec![0.0; labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        d[i * k + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], d).expect("one-hot shape")
}

fn shuffled(n: usize, r: &mut SimRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    idx
}

/// Trains on `train` (already normalized as desired); validation loss per epoch
/// on `val`.
pub fn train_autoencoder(
    config: &AutoencoderConfig,
    train: &LabeledImageSet,
    val: &LabeledImageSet,
    seed: u64,
) -> Result<(ConvAutoencoder, TrainReport)> {
    if train.is_empty() || config.train.batch == 0 {
        return Err(Error::invalid("empty training set or zero batch size"));
    }
    let mut model = ConvAutoencoder::new(config.clone(), seed)?;
    model.normalization = train.normalization;
    let mut opt = Adam::new(AdamConfig::new(config.train.lr));
    let mut r = rng::stream(seed, 0xDA7A);
    let mut report = TrainReport::default();
    let k = model.class_dim();
    for _ in 0..config.train.epochs {
        let order = shuffled(train.len(), &mut r);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.train.batch) {
            let mut tape = Tape::new();
            let b = model.params.bind(&mut tape, true);
            let x = tape.constant(train.batch(chunk));
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let c = (k > 0).then(|| tape.constant(one_hot_rows(&labels, k)));
            let y = model.reconstruct(&mut tape, &b, x, c)?;
            let loss = tape.mse(y, x)?;
            total += tape.value(loss).item() as f64 * chunk.len() as f64;
            count += chunk.len();
            let g = tape.backward(loss)?;
            let grads = b.grads(&g, &model.params);
            opt.step(model.params.tensors_mut(), &grads);
        }
        report.train_loss.push(total / count as f64);
        report.val_loss.push(autoencoder_loss(&model, val)?);
    }
    Ok((model, report))
}

/// Mean reconstruction MSE over `data` with the true labels as class input.
pub fn autoencoder_loss(model: &ConvAutoencoder, data: &LabeledImageSet) -> Result<f64> {
    let k = model.class_dim();
    let mut total = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(500) {
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
        let c = (k > 0).then(|| one_hot_rows(&labels, k));
        total += model.per_image_mse(&data.batch(chunk), c.as_ref())?.iter().sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvClassifier {
    pub config: ClassifierConfig,
    pub params: ParamSet,
    pub normalization: Normalization,
    backbone: [ConvLayer; 3],
    head: Vec<(ParamId, ParamId)>,
}

impl ConvClassifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, 0xC1A5);
        let mut params = ParamSet::new();
        let backbone = backbone(&mut params, "cls", 8, &mut r);
        let widths: Vec<usize> = if config.head_hidden > 0 {
            vec![8, config.head_hidden, CLASSES]
        } else {
            vec![8, CLASSES]
        };
        let head = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f32).sqrt();
                (
                    params.add_uniform(&format!("head{i}.w"), &[w[0], w[1]], bound, &mut r),
                    params.add_uniform(&format!("head{i}.b"), &[w[1]], bound, &mut r),
                )
            })
            .collect();
        Ok(ConvClassifier {
            config,
            params,
            normalization: Normalization::Raw,
            backbone,
            head,
        })
    }

    /// `[N, 1, 28, 28]` → logits `[N, 10]`.
    pub fn logits(&self, tape: &mut Tape, bound: &Bound, images: Var) -> Result<Var> {
        image_tensor_check(tape, images)?;
        let mut h = run_backbone(&self.backbone, tape, bound, images)?;
        for (i, &(w, b)) in self.head.iter().enumerate() {
            if i > 0 {
                h = tape.relu(h);
            }
            let m = tape.matmul(h, bound.var(w))?;
            h = tape.add_row(m, bound.var(b))?;
        }
        Ok(h)
    }

    pub fn predict_logits(&self, images: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(images.clone());
        let l = self.logits(&mut tape, &b, x)?;
        Ok(tape.value(l).clone())
    }

    pub fn to_checkpoint(&self, mut metadata: serde_json::Value) -> Checkpoint {
        if let serde_json::Value::Object(m) = &mut metadata {
            m.insert("model".into(), "classifier".into());
            m.insert("config".into(), serde_json::to_value(&self.config).expect("config serializes"));
            m.insert("normalization".into(), serde_json::to_value(self.normalization).expect("serializes"));
        }
        Checkpoint::new(self.params.to_named(), metadata)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_model(ckpt, "classifier")?;
        let mut m = ConvClassifier::new(meta_field(ckpt, "config")?, 0)?;
        m.normalization = meta_field(ckpt, "normalization")?;
        m.params.load_from(&ckpt.tensors)?;
        Ok(m)
    }
}

/// Cross-entropy training; validation loss and accuracy per epoch on `val`.
pub fn train_classifier(
    config: &ClassifierConfig,
    train: &LabeledImageSet,
    val: &LabeledImageSet,
    seed: u64,
) -> Result<(ConvClassifier, TrainReport)> {
    if train.is_empty() || config.train.batch == 0 {
        return Err(Error::invalid("empty training set or zero batch size"));
    }
    let mut model = ConvClassifier::new(config.clone(), seed)?;
    model.normalization = train.normalization;
    let mut opt = Adam::new(AdamConfig::new(config.train.lr));
    let mut r = rng::stream(seed, 0xDA7A);
    let mut report = TrainReport::default();
    for _ in 0..config.train.epochs {
        let order = shuffled(train.len(), &mut r);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.train.batch) {
            let mut tape = Tape::new();
            let b = model.params.bind(&mut tape, true);
            let x = tape.constant(train.batch(chunk));
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let logits = model.logits(&mut tape, &b, x)?;
            let loss = tape.cross_entropy(logits, &labels)?;
            total += tape.value(loss).item() as f64 * chunk.len() as f64;
            count += chunk.len();
            let g = tape.backward(loss)?;
            let grads = b.grads(&g, &model.params);
            opt.step(model.params.tensors_mut(), &grads);
        }
        report.train_loss.push(total / count as f64);
        let (loss, acc) = classifier_eval(&model, val)?;
        report.val_loss.push(loss);
        report.val_accuracy.push(acc);
    }
    Ok((model, report))
}

/// Mean cross-entropy and accuracy over `data`.
pub fn classifier_eval(model: &ConvClassifier, data: &LabeledImageSet) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0usize);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(500) {
        let logits = model.predict_logits(&data.batch(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let row = logits.row(r);
            let lse = crate::kernels::softmax(row, &[CLASSES], 0, true);
            loss -= lse[data.labels[i]] as f64;
            correct += usize::from(crate::gbi::argmax(row) == data.labels[i]);
        }
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}
