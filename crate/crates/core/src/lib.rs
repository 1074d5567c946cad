//! Online-adaptive quantization with quasi-quantile trees.
//!
//! The core type is [`Xenovert`]: a perfect binary tree of depth `L` whose
//! node values are nudged toward every input routed through them, so the
//! `2^L` intervals they delimit keep roughly equal input density even when
//! the input distribution moves. Around it sit the pieces needed to measure
//! and use that behaviour:
//!
//! - [`metrics`]: histogram intersection against uniform, the quantile
//!   shift function, accuracy and MSE.
//! - [`distgen`]: synthetic streams with instant, gradual and recurring shifts.
//! - [`mlp`]: a small from-scratch MLP used as a downstream model.
//! - [`pipeline`]: per-feature tree banks and the train-on-source /
//!   adapt-on-target covariate-shift experiment.
//! - [`cli`]: the `xenovert` command line.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod distgen;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod qtree;

pub use qtree::{NodeId, QuasiQuantileNode, Snapshot, TreeError, Xenovert, XenovertConfig};
