//! Iterative recovery algorithms.
//!
//! All algorithms start from the all-zero estimate, run a fixed number of
//! iterations (optionally stopping early) and quantize their final soft
//! estimate onto `C₀`.

mod baselines;
mod lmmse;
mod turbo;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrices::SensingMatrix;
use crate::model::Prior;

pub use baselines::{hard_threshold, run_bamp, run_iht, run_sft, run_sft_from, BAMP_DIVERGENCE_LIMIT};
pub use lmmse::{k_diagonal, lmmse_update, LmmseSolver, LmmseUpdate};
pub use turbo::{run_tms, run_tms_observed, run_tsr, run_tsr_observed, TurboSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Turbo recovery with the exact LMMSE linear stage.
    Tms,
    /// Turbo recovery with the matched-filter linear stage.
    Tsr,
    /// Iterative hard thresholding.
    Iht,
    /// Iterative soft feedback without extrinsic exchange.
    Sft,
    /// Bayesian approximate message passing.
    Bamp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Tms,
        Algorithm::Tsr,
        Algorithm::Iht,
        Algorithm::Sft,
        Algorithm::Bamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tms => "tms",
            Algorithm::Tsr => "tsr",
            Algorithm::Iht => "iht",
            Algorithm::Sft => "sft",
            Algorithm::Bamp => "bamp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    /// Stop once the largest change of the soft estimate between two
    /// iterations drops below this value. Zero disables early stopping.
    pub early_stop_tol: f64,
    pub record_trace: bool,
    /// How TMS solves its LMMSE system.
    pub solver: LmmseSolver,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            algorithm: Algorithm::Tms,
            max_iters: 50,
            early_stop_tol: 0.0,
            record_trace: false,
            solver: LmmseSolver::Spectral,
        }
    }
}

impl RecoveryConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        RecoveryConfig {
            algorithm,
            ..Default::default()
        }
    }

    pub fn with_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_solver(mut self, solver: LmmseSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.early_stop_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "early_stop_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Variances exchanged in one turbo iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurboTrace {
    pub var_m_pri: f64,
    pub var_m_post: f64,
    pub var_m_ext: f64,
    pub var_s_post: f64,
    pub var_s_ext: f64,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IterationTrace {
    Turbo(TurboTrace),
    /// Baselines track a single effective noise level.
    Baseline { effective_var: f64, clamp_events: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: DVector<f64>,
    /// Final soft estimate before quantization.
    pub x_soft: DVector<f64>,
    pub iters_run: usize,
    pub clamp_events: usize,
    /// Set by BAMP when the effective variance blew past its guard.
    pub diverged: bool,
    pub trace: Option<Vec<IterationTrace>>,
}

/// Runs `cfg.algorithm`.
pub fn recover(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    match cfg.algorithm {
        Algorithm::Tms => run_tms(y, matrix, sigma_n_sq, prior, cfg),
        Algorithm::Tsr => run_tsr(y, matrix, sigma_n_sq, prior, cfg),
        Algorithm::Iht => run_iht(y, matrix, sigma_n_sq, prior, cfg),
        Algorithm::Sft => run_sft(y, matrix, sigma_n_sq, prior, cfg),
        Algorithm::Bamp => run_bamp(y, matrix, sigma_n_sq, prior, cfg),
    }
}

fn check_problem(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<()> {
    cfg.validate()?;
    check_len("measurement vector", matrix.rows(), y.len())?;
    check_len("prior dimension", matrix.cols(), prior.len())?;
    if !sigma_n_sq.is_finite() {
        return Err(Error::NonFinite("noise variance"));
    }
    if sigma_n_sq <= 0.0 {
        return Err(Error::NonPositiveVariance(sigma_n_sq));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurement vector"));
    }
    Ok(())
}

fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
