pub mod bayes;
pub mod checkpoint;
pub mod error;
pub mod gbi;
pub mod kernels;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod rng;
pub mod seq_model;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod vision;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
