//! Reference algorithms that share the denoiser and quantizer with the turbo
//! schemes: iterative hard thresholding, iterative soft feedback and
//! Bayesian AMP.

use nalgebra::DVector;

use super::{check_problem, max_abs_diff, IterationTrace, RecoveryConfig, RecoveryResult};
use crate::denoiser::soft_value_vec;
use crate::error::{check_len, Result};
use crate::matrices::SensingMatrix;
use crate::model::{quantize, Prior};
use crate::{V_MAX, V_MIN};

/// BAMP stops once its effective variance exceeds this value.
pub const BAMP_DIVERGENCE_LIMIT: f64 = 1e6;

/// Keeps the `s` largest-magnitude entries; ties go to the lower index.
pub fn hard_threshold(v: &DVector<f64>, s: usize) -> DVector<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    let mut out = DVector::zeros(v.len());
    for &i in order.iter().take(s) {
        out[i] = v[i];
    }
    out
}

fn clamp_var(v: f64) -> (f64, bool) {
    let c = v.clamp(V_MIN, V_MAX);
    (c, c != v)
}

fn finish(
    x_soft: DVector<f64>,
    prior: &Prior,
    iters_run: usize,
    clamp_events: usize,
    diverged: bool,
    trace: Option<Vec<IterationTrace>>,
) -> RecoveryResult {
    RecoveryResult {
        x_hat: quantize(&x_soft, prior),
        x_soft,
        iters_run,
        clamp_events,
        diverged,
        trace,
    }
}

/// `x ← H_s(x + Aᵀ(y − A x))` with unit step.
pub fn run_iht(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    check_problem(y, matrix, sigma_n_sq, prior, cfg)?;
    let a = matrix.a();
    let mut x = DVector::zeros(matrix.cols());
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut iters_run = 0;
    for it in 0..cfg.max_iters {
        let residual = y - a * &x;
        if let Some(t) = trace.as_mut() {
            t.push(IterationTrace::Baseline {
                effective_var: residual.norm_squared() / matrix.rows() as f64,
                clamp_events: 0,
            });
        }
        let mut z = x.clone();
        z.gemv_tr(1.0, a, &residual, 1.0);
        let next = hard_threshold(&z, prior.sparsity());
        iters_run = it + 1;
        let change = max_abs_diff(&next, &x);
        x = next;
        if cfg.early_stop_tol > 0.0 && change < cfg.early_stop_tol {
            break;
        }
    }
    Ok(finish(x, prior, iters_run, 0, false, trace))
}

/// Matched-filter iteration with the soft-value denoiser in place of hard
/// thresholding, using `‖y − A x‖²/K` as the effective noise level and no
/// extrinsic exchange.
pub fn run_sft(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    run_sft_from(&DVector::zeros(matrix.cols()), y, matrix, sigma_n_sq, prior, cfg)
}

/// [`run_sft`] started from a given estimate.
pub fn run_sft_from(
    x0: &DVector<f64>,
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    check_problem(y, matrix, sigma_n_sq, prior, cfg)?;
    check_len("initial estimate", matrix.cols(), x0.len())?;
    let a = matrix.a();
    let rows = matrix.rows() as f64;
    let mut x = x0.clone();
    let mut trace = cfg.record_trace.then(Vec::new);
    let (mut iters_run, mut clamp_events) = (0, 0);
    for it in 0..cfg.max_iters {
        let residual = y - a * &x;
        let (tau, clamped) = clamp_var(residual.norm_squared() / rows);
        clamp_events += usize::from(clamped);
        if let Some(t) = trace.as_mut() {
            t.push(IterationTrace::Baseline {
                effective_var: tau,
                clamp_events: usize::from(clamped),
            });
        }
        let mut z = x.clone();
        z.gemv_tr(1.0, a, &residual, 1.0);
        let next = soft_value_vec(&z, tau, prior)?.post_mean;
        iters_run = it + 1;
        let change = max_abs_diff(&next, &x);
        x = next;
        if cfg.early_stop_tol > 0.0 && change < cfg.early_stop_tol {
            break;
        }
    }
    Ok(finish(x, prior, iters_run, clamp_events, false, trace))
}

/// Bayesian AMP with the soft-value denoiser:
///
/// ```text
/// r  = y − A x + (L/K) r_prev · mean(η')
/// τ  = ‖r‖² / K
/// x' = η(x + Aᵀ r; τ)
/// ```
pub fn run_bamp(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    check_problem(y, matrix, sigma_n_sq, prior, cfg)?;
    let a = matrix.a();
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let undersampling = cols as f64 / rows as f64;

    let mut x = DVector::zeros(cols);
    let mut r_prev = DVector::zeros(rows);
    let mut onsager = 0.0;
    let mut trace = cfg.record_trace.then(Vec::new);
    let (mut iters_run, mut clamp_events, mut diverged) = (0, 0, false);

    for it in 0..cfg.max_iters {
        let mut residual = y - a * &x;
        residual.axpy(undersampling * onsager, &r_prev, 1.0);
        let raw_tau = residual.norm_squared() / rows as f64;
        if !(raw_tau <= BAMP_DIVERGENCE_LIMIT) {
            diverged = true;
            if let Some(t) = trace.as_mut() {
                t.push(IterationTrace::Baseline {
                    effective_var: raw_tau,
                    clamp_events: 0,
                });
            }
            break;
        }
        let (tau, clamped) = clamp_var(raw_tau);
        clamp_events += usize::from(clamped);
        if let Some(t) = trace.as_mut() {
            t.push(IterationTrace::Baseline {
                effective_var: tau,
                clamp_events: usize::from(clamped),
            });
        }

        let mut z = x.clone();
        z.gemv_tr(1.0, a, &residual, 1.0);
        let out = soft_value_vec(&z, tau, prior)?;
        // Mean of η'(z) = var{x|z}/τ.
        onsager = out.post_var_mean / tau;
        iters_run = it + 1;
        let change = max_abs_diff(&out.post_mean, &x);
        x = out.post_mean;
        r_prev = residual;
        if cfg.early_stop_tol > 0.0 && change < cfg.early_stop_tol {
            break;
        }
    }
    Ok(finish(x, prior, iters_run, clamp_events, diverged, trace))
}
