//! Random walks `(X_n, W_n)` stopped when `X_n` first exceeds a linear
//! boundary `a`.
//!
//! The crate covers the whole pipeline:
//!
//! - [`model`]: increment laws, sampling, and the population moments that
//!   enter the expansions.
//! - [`walk`]: boundary crossing and ascending ladder epochs.
//! - [`ladder`]: ladder-variable moments, the `rho` step functions and the
//!   Wald-type identity checks.
//! - [`expansion`]: second-order approximations for the joint and marginal
//!   laws of the stopped sums, the renewal density, the smooth-statistic CDF
//!   and the t-statistic CDF.
//! - [`inference`]: t-statistics, plug-in estimators, and the Anscombe and
//!   bias-corrected confidence intervals.
//! - [`harness`]: Monte Carlo experiments and report serialization.

pub mod error;
pub mod expansion;
pub mod harness;
pub mod inference;
pub mod ladder;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use model::{analytic_moments, sample_moments, IncrementModel, JointMoments, ModelSpec, MomentSet};
pub use rng::StreamSeed;
