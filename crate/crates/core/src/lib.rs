//! Desk-scale contrastive learning laboratory.
//!
//! The crate implements the binary-contrastive MIO loss and the InfoNCE
//! baseline with full analytic gradients, an exact mutual-information bound
//! oracle on discrete alphabets, a Monte-Carlo study of false-negative
//! geometry, and the small training stack (MLP encoder/projector with manual
//! backprop, LARS/SGD, warmup-cosine schedule, linear probe) needed to run
//! ablations on synthetic data.
//!
//! Data-parallel inner loops (per-anchor loss rows, Monte-Carlo trials,
//! finite-difference sweeps, per-sample augmentation) go through [`par`],
//! which uses rayon when the `parallel` feature is enabled and falls back to
//! plain iteration otherwise. Every reduction runs in a fixed order, so
//! results are bit-identical across both paths.

pub mod data_augment;
pub mod error;
pub mod eval;
pub mod fn_geometry;
pub mod losses;
pub mod mi_oracle;
pub mod model;
pub mod numerics;
pub mod pairing;
pub mod par;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Mat64, Rng};
pub use pairing::PairIndexSet;
