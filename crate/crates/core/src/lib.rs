//! Turbo-style recovery of discrete-valued sparse vectors.
//!
//! A sparse vector `x` with entries from a finite alphabet extended by zero
//! is observed through `y = A x + n` with fewer measurements than unknowns.
//! The two turbo algorithms alternate a joint linear estimator with a
//! symbol-wise Bayesian denoiser and exchange extrinsic estimates between
//! them:
//!
//! * [`recover::run_tms`] uses the exact LMMSE estimator and works with any
//!   measurement matrix.
//! * [`recover::run_tsr`] uses the matched-filter approximation that is only
//!   accurate when `A Aᵀ` is close to a scaled identity.
//!
//! Baselines ([`recover::run_iht`], [`recover::run_sft`],
//! [`recover::run_bamp`]) share the same denoiser and quantizer. The
//! [`diagnostics`] module checks numerically that extrinsic computation and
//! bias compensation coincide.

pub mod denoiser;
pub mod diagnostics;
mod error;
pub mod matrices;
pub mod model;
pub mod recover;

pub use error::{Error, Result};

/// Lower clamp for every variance exchanged in the turbo loop.
pub const V_MIN: f64 = 1e-12;
/// Upper clamp for every variance exchanged in the turbo loop.
pub const V_MAX: f64 = 1e6;
