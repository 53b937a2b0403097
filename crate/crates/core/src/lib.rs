//! Differentially private mean estimation and optimization for problems whose
//! per-example gradients are sparse.
//!
//! The crate is organized bottom-up:
//!
//! * [`vector`], [`dataset`], [`loss`], [`params`], [`rng`]: the data model.
//! * [`geometry`] and [`noise`]: projections and calibrated randomness.
//! * [`mean_estimation`]: the projection mechanism and the compressed-sensing
//!   (Gaussian l1-recovery) mechanism.
//! * [`bias_reduction`], [`accounting`], [`sgd`]: the bias-reduced gradient
//!   oracle, the adaptive privacy filter and randomly stopped projected SGD.
//! * [`selection`]: confidence boosting, output perturbation and the sparse
//!   exponential mechanism.
//! * [`hard_instances`]: packing and bootstrapping constructions used as
//!   adversarial inputs.
//!
//! Noise is drawn from ordinary floating-point samplers. Floating-point attacks
//! on DP implementations are out of scope; do not use this crate to protect
//! real data without a secure sampler.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod bias_reduction;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod hard_instances;
pub mod loss;
pub mod mean_estimation;
pub mod noise;
pub mod params;
pub mod rng;
pub mod selection;
pub mod sgd;
pub mod vector;

pub use dataset::{Dataset, DatasetBounds, ValidationMode, Violation};
pub use error::{Error, Result};
pub use loss::{LossConstants, LossModel};
pub use params::{FeasibleSet, PrivacyParams};
pub use rng::{RngStream, StreamRng};
pub use vector::{norms, Norms, SparseVector};
