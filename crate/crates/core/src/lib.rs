pub mod baselines;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mtrnet;
pub mod nn;
pub mod scalar;
pub mod theory;

pub use datagen::Dataset;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = nn::Matrix<f64>;
