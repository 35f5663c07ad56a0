//! Multi-source multi-agent trajectory prediction on a small reverse-mode
//! autodiff engine: synthetic V2X scenes, the fusion model, training and
//! evaluation.

// `!(x > 0.0)` also rejects NaN; indexed loops mirror the tensor math
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod artifact;
pub mod autodiff;
pub mod error;
pub mod model;
pub mod plot;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
