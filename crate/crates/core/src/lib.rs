//! Long-tailed recognition with mixed-image supervised contrastive
//! learning: synthetic data, blending, imbalance-aware sampling, a tape
//! autodiff core, the mixed-pair contrastive and compensated
//! classification losses, a small trainable model, the one-stage trainer,
//! and feature-space diagnostics.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod mixer;
pub mod model;
pub mod pairloss;
pub mod rng;
pub mod sgd;
pub mod tape;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
