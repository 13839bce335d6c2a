//! Image datasets, the class-conditional autoencoder, the classifier baseline,
//! and class inference through the frozen decoder.

pub mod idx;
mod infer;
mod models;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use infer::*;
pub use models::*;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Normalization {
    /// Pixels in `[0, 1]`.
    Raw,
    /// `(raw − mean) / std`.
    Standardized { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    /// `n × 784`, row-major.
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
    pub normalization: Normalization,
}

impl LabeledImageSet {
    pub fn new(images: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() * PIXELS {
            return Err(Error::CountMismatch {
                images: images.len() / PIXELS,
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= CLASSES) {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        Ok(LabeledImageSet {
            images,
            labels,
            normalization: Normalization::Raw,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Pixel mean and population std, accumulated in f64.
    pub fn pixel_stats(&self) -> (f64, f64) {
        let n = self.images.len() as f64;
        let mean = self.images.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = self.images.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    /// Standardizes with this set's own statistics.
    pub fn standardized(&self) -> Self {
        let (mean, std) = self.pixel_stats();
        self.standardized_with(mean, std)
    }

    /// Applies `(x − mean) / std` to the current pixels and composes the
    /// recorded normalization.
    pub fn standardized_with(&self, mean: f64, std: f64) -> Self {
        let images = self.images.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect();
        let normalization = match self.normalization {
            Normalization::Raw => Normalization::Standardized { mean, std },
            Normalization::Standardized { mean: m0, std: s0 } => Normalization::Standardized {
                mean: m0 + mean * s0,
                std: s0 * std,
            },
        };
        LabeledImageSet {
            images,
            labels: self.labels.clone(),
            normalization,
        }
    }

    /// Pixels mapped back to `[0, 1]` and clipped.
    pub fn to_raw_pixels(&self, pixels: &[f32]) -> Vec<f32> {
        let (m, s) = match self.normalization {
            Normalization::Raw => (0.0, 1.0),
            Normalization::Standardized { mean, std } => (mean, std),
        };
        pixels.iter().map(|&v| ((v as f64 * s + m) as f32).clamp(0.0, 1.0)).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut images = Vec::with_capacity(idx.len() * PIXELS);
        for &i in idx {
            images.extend_from_slice(self.image(i));
        }
        LabeledImageSet {
            images,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            normalization: self.normalization,
        }
    }

    pub fn head(&self, n: usize) -> Self {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Images `idx` as a `[B × 1 × 28 × 28]` tensor.
    pub fn batch(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * PIXELS);
        for &i in idx {
            data.extend_from_slice(self.image(i));
        }
        Tensor::new(vec![idx.len(), 1, SIDE, SIDE], data).expect("batch shape")
    }
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet> {
    let (n, rows, cols, pixels) = idx::read_images(images_path)?;
    let labels = idx::read_labels(labels_path)?;
    if n != labels.len() {
        return Err(Error::CountMismatch { images: n, labels: labels.len() });
    }
    if rows != SIDE || cols != SIDE {
        return Err(Error::invalid(format!("{}: images are {rows}×{cols}, expected 28×28", images_path.display())));
    }
    LabeledImageSet::new(pixels, labels.into_iter().map(usize::from).collect())
}

/// Loads `{split}-images-idx3-ubyte` / `{split}-labels-idx1-ubyte` from `dir`,
/// where `split` is `train` or `t10k`.
pub fn load_split(dir: &Path, split: &str) -> Result<LabeledImageSet> {
    load_idx(
        &dir.join(format!("{split}-images-idx3-ubyte")),
        &dir.join(format!("{split}-labels-idx1-ubyte")),
    )
}

/// Binary PGM (P5, maxval 255) of `[0, 1]` pixels.
pub fn write_pgm(w: &mut impl std::io::Write, width: usize, height: usize, pixels: &[f32]) -> std::io::Result<()> {
    assert_eq!(pixels.len(), width * height);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_all(&bytes)
}

/// Lays out 28×28 images left to right.
pub fn strip(images: &[Vec<f32>]) -> (usize, usize, Vec<f32>) {
    let width = SIDE * images.len();
    let mut out = vec![0.0; width * SIDE];
    for (k, img) in images.iter().enumerate() {
        for r in 0..SIDE {
            out[r * width + k * SIDE..r * width + (k + 1) * SIDE].copy_from_slice(&img[r * SIDE..(r + 1) * SIDE]);
        }
    }
    (width, SIDE, out)
}
