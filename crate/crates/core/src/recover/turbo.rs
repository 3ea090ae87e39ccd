use nalgebra::DVector;

use super::lmmse::{lmmse_update, LmmseSolver};
use super::{check_problem, max_abs_diff, IterationTrace, RecoveryConfig, RecoveryResult, TurboTrace};
use crate::denoiser::{extrinsic, soft_value_vec};
use crate::error::Result;
use crate::matrices::SensingMatrix;
use crate::model::{quantize, Estimate, Prior};
use crate::{V_MAX, V_MIN};

/// Everything exchanged during one turbo iteration, handed to observers.
#[derive(Debug)]
pub struct TurboSnapshot<'a> {
    pub iteration: usize,
    /// Input of the linear stage.
    pub m_pri: &'a Estimate,
    /// Output of the linear stage.
    pub m_post: &'a Estimate,
    /// Extrinsic of the linear stage, which is the denoiser input.
    pub s_pri: &'a Estimate,
    /// Denoiser output; its variance is the average posterior variance.
    pub s_post: &'a Estimate,
    /// Extrinsic of the denoiser, the next linear-stage input.
    pub s_ext: &'a Estimate,
}

enum LinearStage {
    Exact(LmmseSolver),
    MatchedFilter,
}

impl LinearStage {
    fn apply(
        &self,
        matrix: &SensingMatrix,
        y: &DVector<f64>,
        pri: &Estimate,
        sigma_n_sq: f64,
    ) -> Result<Estimate> {
        let v = pri.variance;
        match self {
            LinearStage::Exact(solver) => {
                let upd = lmmse_update(matrix, y, &pri.mean, v, sigma_n_sq, *solver)?;
                Ok(Estimate::new(upd.x_post, v * (1.0 - upd.mean_k_diag)))
            }
            LinearStage::MatchedFilter => {
                let a = matrix.a();
                let c2 = matrix.c_bar_sq();
                let denom = c2 * v + sigma_n_sq;
                let residual = y - a * &pri.mean;
                let mut x_post = pri.mean.clone();
                match matrix.factor() {
                    Some(f) => {
                        // x + c̄²σ²/(c̄²σ² + σ_n²) · C⁻¹ Uᵀ r
                        let back = f.u.tr_mul(&residual).component_div(&f.c);
                        x_post.axpy(c2 * v / denom, &back, 1.0);
                    }
                    None => {
                        // x + σ²/(c̄²σ² + σ_n²) · Aᵀ r, with c̄² = 1 for unit columns.
                        x_post.gemv_tr(v / denom, a, &residual, 1.0);
                    }
                }
                let ratio = matrix.rows() as f64 / matrix.cols() as f64;
                Ok(Estimate::new(x_post, v * (1.0 - ratio * c2 * v / denom)))
            }
        }
    }
}

fn run_turbo(
    stage: LinearStage,
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
    observer: &mut dyn FnMut(&TurboSnapshot<'_>),
) -> Result<RecoveryResult> {
    check_problem(y, matrix, sigma_n_sq, prior, cfg)?;
    let len = matrix.cols();

    let mut m_pri = Estimate::new(DVector::zeros(len), prior.activity().clamp(V_MIN, V_MAX));
    let mut x_soft = DVector::zeros(len);
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut clamp_total = 0;
    let mut iters_run = 0;

    for iteration in 0..cfg.max_iters {
        let m_post = stage.apply(matrix, y, &m_pri, sigma_n_sq)?;
        let m_ext = extrinsic(&m_post, &m_pri)?;

        let s_pri = m_ext.estimate;
        let denoised = soft_value_vec(&s_pri.mean, s_pri.variance, prior)?;
        // An all-zero prior yields zero posterior variance; keep it positive.
        let s_post = Estimate::new(denoised.post_mean, denoised.post_var_mean.max(V_MIN));
        let s_ext = extrinsic(&s_post, &s_pri)?;

        let clamps = usize::from(m_ext.clamped) + usize::from(s_ext.clamped);
        clamp_total += clamps;
        if let Some(t) = trace.as_mut() {
            t.push(IterationTrace::Turbo(TurboTrace {
                var_m_pri: m_pri.variance,
                var_m_post: m_post.variance,
                var_m_ext: s_pri.variance,
                var_s_post: s_post.variance,
                var_s_ext: s_ext.estimate.variance,
                clamp_events: clamps,
            }));
        }
        observer(&TurboSnapshot {
            iteration,
            m_pri: &m_pri,
            m_post: &m_post,
            s_pri: &s_pri,
            s_post: &s_post,
            s_ext: &s_ext.estimate,
        });

        iters_run = iteration + 1;
        let change = max_abs_diff(&s_post.mean, &x_soft);
        x_soft = s_post.mean;
        m_pri = s_ext.estimate;
        if cfg.early_stop_tol > 0.0 && iteration > 0 && change < cfg.early_stop_tol {
            break;
        }
    }

    Ok(RecoveryResult {
        x_hat: quantize(&x_soft, prior),
        x_soft,
        iters_run,
        clamp_events: clamp_total,
        diverged: false,
        trace,
    })
}

/// Turbo recovery with the exact LMMSE linear stage (TMS/Q). Works for any
/// measurement matrix.
pub fn run_tms(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    run_tms_observed(y, matrix, sigma_n_sq, prior, cfg, |_| {})
}

/// [`run_tms`] with a callback invoked after every iteration.
pub fn run_tms_observed(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
    mut observer: impl FnMut(&TurboSnapshot<'_>),
) -> Result<RecoveryResult> {
    let stage = LinearStage::Exact(cfg.solver);
    run_turbo(stage, y, matrix, sigma_n_sq, prior, cfg, &mut observer)
}

/// Turbo recovery with the matched-filter linear stage (TSR/Q).
///
/// Partial-orthogonal matrices use their `U·diag(c)` factorization; any other
/// matrix falls back to the `Aᵀ` form with `c̄² = 1`, which is only sensible
/// when `A Aᵀ` is close to the identity.
pub fn run_tsr(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    run_tsr_observed(y, matrix, sigma_n_sq, prior, cfg, |_| {})
}

pub fn run_tsr_observed(
    y: &DVector<f64>,
    matrix: &SensingMatrix,
    sigma_n_sq: f64,
    prior: &Prior,
    cfg: &RecoveryConfig,
    mut observer: impl FnMut(&TurboSnapshot<'_>),
) -> Result<RecoveryResult> {
    run_turbo(
        LinearStage::MatchedFilter,
        y,
        matrix,
        sigma_n_sq,
        prior,
        cfg,
        &mut observer,
    )
}
