//! gcnlab: a laboratory for studying performance degradation in deep graph
//! convolutional networks and the normalizations that resolve it.
//!
//! The crate provides:
//!
//! * a dense row-major [`matrix::Matrix`] and a CSR [`graph::SparseAdjacency`]
//!   with symmetric renormalization (`D^{-1/2} (A + I) D^{-1/2}`),
//! * a tape-based reverse-mode [`autodiff`] engine whose operation set covers
//!   exactly what the models need (sparse-dense matmul, dense matmul, ReLU,
//!   dropout, residual add, node/layer normalization, masked softmax
//!   cross-entropy, L1 penalty),
//! * [`models`]: plain GCN plus the TRAN-only and PROP-only ablations, each of
//!   depth 2..=64, with pluggable normalization and placement,
//! * [`diagnostics`]: node-wise variance profiles, variance-bin accuracy gaps,
//!   an empirical graph Lipschitz constant, feature-correlation norms, and
//!   overfitting gaps,
//! * [`data`]: a plain-text graph bundle format, split construction, feature
//!   masking, and a stochastic block model generator,
//! * [`experiment`] and [`report`]: seeded end-to-end training runs, depth/seed
//!   sweeps, CSV/JSON/SVG emission, and binary checkpoints.
//!
//! Everything is deterministic given a seed: random state comes from ChaCha8
//! streams, reductions are sequential per row, and parallelism never reorders
//! floating-point accumulation.

pub mod autodiff;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod models;
pub mod norm;
pub mod optim;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
