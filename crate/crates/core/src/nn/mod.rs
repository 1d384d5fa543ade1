//! Minimal dense-network engine: matrices, affine layers, a gradient tape
//! with gradient reversal, losses, and Adam.

mod adam;
mod layer;
mod matrix;
pub mod ops;
mod tape;

pub use adam::{adam_step, AdamState};
pub use layer::DenseLayer;
pub use matrix::Matrix;
pub use ops::{bce_loss, dense_forward, dropout_mask, elu, sigmoid, squared_loss, unit_normalize_rows};
pub use tape::{Gradients, Tape, Var};

pub(crate) use tape::mmd_value;

/// ELU slope for negative inputs.
pub const ELU_ALPHA: f64 = 1.0;

/// Guard below which a representation row is divided by this constant
/// instead of its own norm.
pub const NORM_EPS: f64 = 1e-8;
