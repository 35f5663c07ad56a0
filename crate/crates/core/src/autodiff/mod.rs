//! Minimal reverse-mode differentiation over dense row-major `f64` tensors,
//! plus the AdamW optimizer, finite-difference gradient checking and the
//! parameter checkpoint format.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ParamCheck};
pub use optim::{AdamWConfig, OptimizerState};
pub use params::{Binder, GradSet, ParamId, ParamStore};
pub use tape::{sigmoid, AttentionSpec, Gradients, HeadMerge, Tape, Var};
pub use tensor::Tensor;
