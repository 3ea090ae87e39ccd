//! Numerical checks of the bias-compensation analysis.
//!
//! * [`verify_stein_identity`]: `E{g(x+e)·e} = E{var(x | x+e)}` for the
//!   posterior-mean denoiser `g` under Gaussian `e`.
//! * [`verify_extrinsic_unbias`]: per-element bias compensation of an exact
//!   LMMSE estimate coincides with the extrinsic computation.
//! * [`verify_variance_tracking`]: the variances tracked by TMS against the
//!   empirical error of its estimates.

pub mod quadrature;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoiser::{extrinsic, soft_value, unbias_elementwise};
use crate::error::{check_len, Error, Result};
use crate::matrices::MatrixKind;
use crate::model::{Estimate, Prior, ProblemInstance};
use crate::recover::{k_diagonal, lmmse_update, run_tms_observed, LmmseSolver, RecoveryConfig};

/// How [`verify_stein_identity`] evaluates the two expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentityMethod {
    /// Composite Gauss–Legendre over `z = x + e`, `budget` nodes per panel.
    /// Panels are no wider than the posterior transition width, so the rule
    /// stays accurate for small error variances.
    Quadrature,
    /// Plain Gauss–Hermite over `e` with `budget` nodes. Accurate only when
    /// `σ_e` is small compared to the symbol spacing.
    GaussHermite,
    /// `budget` joint samples of `(x, e)`.
    MonteCarlo { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `E{g(x+e)·e}`.
    pub lhs: f64,
    /// `E{var(x | x+e)}`.
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub method: IdentityMethod,
    /// Nodes (per panel for [`IdentityMethod::Quadrature`]) or samples.
    pub budget: usize,
    /// Standard error of `lhs − rhs`; Monte Carlo only.
    pub std_err: Option<f64>,
    /// `k_E = (σ_e² − rhs)/σ_e²`, the linear gain of `z − g(z)` on `e`.
    pub k_e_predicted: f64,
    /// Direct estimate of `k_E`: `E{(z − g(z))·e}/σ_e²` by quadrature, or the
    /// least-squares slope of `z − g(z)` on `e` for Monte Carlo.
    pub k_e_measured: f64,
}

impl IdentityReport {
    fn new(
        lhs: f64,
        rhs: f64,
        sigma_e_sq: f64,
        method: IdentityMethod,
        budget: usize,
        std_err: Option<f64>,
        k_e_measured: f64,
    ) -> Self {
        let abs_err = (lhs - rhs).abs();
        IdentityReport {
            lhs,
            rhs,
            abs_err,
            rel_err: abs_err / rhs.abs().max(1e-300),
            method,
            budget,
            std_err,
            k_e_predicted: (sigma_e_sq - rhs) / sigma_e_sq,
            k_e_measured,
        }
    }
}

/// Default node count for the quadrature rules.
pub const DEFAULT_QUADRATURE_NODES: usize = 200;

/// Evaluates both sides of `E{g(x+e)·e} = E{var(x | x+e)}`.
pub fn verify_stein_identity(
    prior: &Prior,
    sigma_e_sq: f64,
    method: IdentityMethod,
    budget: usize,
) -> Result<IdentityReport> {
    if !sigma_e_sq.is_finite() {
        return Err(Error::NonFinite("error variance"));
    }
    if sigma_e_sq <= 0.0 {
        return Err(Error::NonPositiveVariance(sigma_e_sq));
    }
    if budget < 10 {
        return Err(Error::InvalidConfig(format!(
            "identity check needs a budget of at least 10, got {budget}"
        )));
    }
    match method {
        IdentityMethod::Quadrature => Ok(composite_legendre(prior, sigma_e_sq, budget)),
        IdentityMethod::GaussHermite => Ok(gauss_hermite(prior, sigma_e_sq, budget)),
        IdentityMethod::MonteCarlo { seed } => Ok(monte_carlo(prior, sigma_e_sq, budget, seed)),
    }
}

fn composite_legendre(prior: &Prior, sigma_e_sq: f64, nodes_per_panel: usize) -> IdentityReport {
    let sigma = sigma_e_sq.sqrt();
    let atoms: Vec<_> = prior.atoms().iter().filter(|a| a.prob > 0.0).copied().collect();
    let lo = atoms.first().map_or(0.0, |a| a.value) - 12.0 * sigma;
    let hi = atoms.last().map_or(0.0, |a| a.value) + 12.0 * sigma;
    // Posterior transitions between neighbouring symbols have width ~σ²/Δ.
    let width = sigma.min(sigma_e_sq / prior.min_spacing());
    let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
    let h = (hi - lo) / panels as f64;
    let (t, w) = quadrature::gauss_legendre(nodes_per_panel);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma_e_sq).sqrt();

    let (mut lhs, mut rhs, mut residual_corr) = (0.0, 0.0, 0.0);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (ti, wi) in t.iter().zip(&w) {
            let z = mid + 0.5 * h * ti;
            let (g, var) = soft_value(z, sigma_e_sq, prior).expect("finite node");
            for atom in &atoms {
                let e = z - atom.value;
                let weight = 0.5 * h * wi * atom.prob * norm * (-0.5 * e * e / sigma_e_sq).exp();
                lhs += weight * g * e;
                rhs += weight * var;
                residual_corr += weight * (z - g) * e;
            }
        }
    }
    IdentityReport::new(
        lhs,
        rhs,
        sigma_e_sq,
        IdentityMethod::Quadrature,
        nodes_per_panel,
        None,
        residual_corr / sigma_e_sq,
    )
}

fn gauss_hermite(prior: &Prior, sigma_e_sq: f64, nodes: usize) -> IdentityReport {
    let (t, w) = quadrature::gauss_hermite(nodes);
    let scale = (2.0 * sigma_e_sq).sqrt();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let (mut lhs, mut rhs, mut residual_corr) = (0.0, 0.0, 0.0);
    for atom in prior.atoms().iter().filter(|a| a.prob > 0.0) {
        for (ti, wi) in t.iter().zip(&w) {
            let e = scale * ti;
            let z = atom.value + e;
            let (g, var) = soft_value(z, sigma_e_sq, prior).expect("finite node");
            let weight = atom.prob * wi * inv_sqrt_pi;
            lhs += weight * g * e;
            rhs += weight * var;
            residual_corr += weight * (z - g) * e;
        }
    }
    IdentityReport::new(
        lhs,
        rhs,
        sigma_e_sq,
        IdentityMethod::GaussHermite,
        nodes,
        None,
        residual_corr / sigma_e_sq,
    )
}

fn sample_atom<R: Rng>(rng: &mut R, prior: &Prior) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for atom in prior.atoms() {
        acc += atom.prob;
        if u < acc {
            return atom.value;
        }
    }
    prior.atoms().last().map_or(0.0, |a| a.value)
}

fn monte_carlo(prior: &Prior, sigma_e_sq: f64, samples: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = sigma_e_sq.sqrt();
    let (mut sum_ge, mut sum_var, mut sum_d, mut sum_d2) = (0.0, 0.0, 0.0, 0.0);
    let (mut sum_re, mut sum_ee) = (0.0, 0.0);
    for _ in 0..samples {
        let x = sample_atom(&mut rng, prior);
        let e = sigma * rng.sample::<f64, _>(StandardNormal);
        let z = x + e;
        let (g, var) = soft_value(z, sigma_e_sq, prior).expect("finite sample");
        let d = g * e - var;
        sum_ge += g * e;
        sum_var += var;
        sum_d += d;
        sum_d2 += d * d;
        sum_re += (z - g) * e;
        sum_ee += e * e;
    }
    let n = samples as f64;
    let mean_d = sum_d / n;
    let var_d = (sum_d2 - n * mean_d * mean_d).max(0.0) / (n - 1.0);
    IdentityReport::new(
        sum_ge / n,
        sum_var / n,
        sigma_e_sq,
        IdentityMethod::MonteCarlo { seed },
        samples,
        Some((var_d / n).sqrt()),
        sum_re / sum_ee,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasReport {
    /// Largest relative difference between the unbiased and the extrinsic
    /// means and variances over all elements.
    pub max_discrepancy: f64,
    /// Diagonal entries of the cascade that were clamped into `(0, 1)`.
    pub clamp_events: usize,
    pub min_k_diag: f64,
    pub max_k_diag: f64,
}

/// Runs one exact LMMSE step from `x_pri` and compares per-element bias
/// compensation with the per-element extrinsic values.
///
/// Mean differences are measured relative to the largest of the two results
/// and the two inputs of that element; variance differences relative to the
/// larger variance.
pub fn verify_extrinsic_unbias(
    instance: &ProblemInstance,
    x_pri: &DVector<f64>,
    sigma_pri_sq: f64,
) -> Result<UnbiasReport> {
    if !(sigma_pri_sq > 0.0) || !sigma_pri_sq.is_finite() {
        return Err(Error::NonPositiveVariance(sigma_pri_sq));
    }
    check_len("prior estimate", instance.cols(), x_pri.len())?;
    let solver = LmmseSolver::Cholesky;
    let matrix = &instance.matrix;
    let upd = lmmse_update(matrix, &instance.y, x_pri, sigma_pri_sq, instance.sigma_n_sq, solver)?;
    let k = k_diagonal(matrix, sigma_pri_sq, instance.sigma_n_sq, solver)?;
    let unbiased = unbias_elementwise(x_pri, &upd.x_post, &k, sigma_pri_sq)?;

    let mut worst: f64 = 0.0;
    for i in 0..x_pri.len() {
        let pri = Estimate::new(DVector::from_element(1, x_pri[i]), sigma_pri_sq);
        let post = Estimate::new(
            DVector::from_element(1, upd.x_post[i]),
            sigma_pri_sq * (1.0 - k[i]),
        );
        let ext = extrinsic(&post, &pri)?.estimate;

        let (a, b) = (unbiased.mean[i], ext.mean[0]);
        let scale = a.abs().max(b.abs()).max(x_pri[i].abs()).max(upd.x_post[i].abs());
        if scale > 0.0 {
            worst = worst.max((a - b).abs() / scale);
        }
        let (va, vb) = (unbiased.variance[i], ext.variance);
        worst = worst.max((va - vb).abs() / va.max(vb).max(1e-300));
    }
    Ok(UnbiasReport {
        max_discrepancy: worst,
        clamp_events: unbiased.clamp_events,
        min_k_diag: k.min(),
        max_k_diag: k.max(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub prior: Prior,
    pub kind: MatrixKind,
    pub rows: usize,
    /// `10·log₁₀(1/σ_n²)`.
    pub snr_db: f64,
    pub trials: usize,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingPoint {
    pub iteration: usize,
    /// Average tracked `σ²_M,pri`.
    pub tracked: f64,
    /// Average of `‖x_M^pri − x‖²/L`.
    pub empirical: f64,
    /// `tracked / empirical`.
    pub ratio: f64,
    /// Correlation of the LMMSE error with its own (biased) estimate.
    pub corr_post_error_estimate: f64,
    /// Correlation of the extrinsic error with the true signal.
    pub corr_ext_error_signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingReport {
    pub config: TrackingConfig,
    pub points: Vec<TrackingPoint>,
}

#[derive(Default, Clone)]
struct Moments {
    tracked: f64,
    empirical: f64,
    // cross-moments for the two correlation diagnostics
    post: [f64; 5],
    ext: [f64; 5],
}

fn accumulate(m: &mut [f64; 5], a: &DVector<f64>, b: &DVector<f64>) {
    for (ai, bi) in a.iter().zip(b.iter()) {
        m[0] += ai;
        m[1] += bi;
        m[2] += ai * bi;
        m[3] += ai * ai;
        m[4] += bi * bi;
    }
}

fn correlation(m: &[f64; 5], n: f64) -> f64 {
    let cov = m[2] / n - (m[0] / n) * (m[1] / n);
    let va = m[3] / n - (m[0] / n).powi(2);
    let vb = m[4] / n - (m[1] / n).powi(2);
    cov / (va * vb).sqrt().max(1e-300)
}

/// Compares the variances TMS tracks with the mean squared error of the
/// estimates they describe, averaged over fresh instances.
pub fn verify_variance_tracking(cfg: &TrackingConfig) -> Result<TrackingReport> {
    if cfg.trials < 100 {
        return Err(Error::InvalidConfig(format!(
            "variance tracking needs at least 100 trials, got {}",
            cfg.trials
        )));
    }
    let sigma_n_sq = 10f64.powf(-cfg.snr_db / 10.0);
    let rcfg = RecoveryConfig::default().with_iters(cfg.iters);
    let mut moments = vec![Moments::default(); cfg.iters];
    let len = cfg.prior.len();

    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial as u64);
        let inst = ProblemInstance::generate(&mut rng, &cfg.prior, cfg.kind, cfg.rows, sigma_n_sq)?;
        let x = &inst.x_true;
        run_tms_observed(&inst.y, &inst.matrix, sigma_n_sq, &cfg.prior, &rcfg, |snap| {
            let m = &mut moments[snap.iteration];
            m.tracked += snap.m_pri.variance;
            m.empirical += (&snap.m_pri.mean - x).norm_squared() / len as f64;
            accumulate(&mut m.post, &(&snap.m_post.mean - x), &snap.m_post.mean);
            accumulate(&mut m.ext, &(&snap.s_pri.mean - x), x);
        })?;
    }

    let n = cfg.trials as f64;
    let samples = n * len as f64;
    let points = moments
        .iter()
        .enumerate()
        .map(|(iteration, m)| {
            let tracked = m.tracked / n;
            let empirical = m.empirical / n;
            TrackingPoint {
                iteration,
                tracked,
                empirical,
                ratio: tracked / empirical.max(1e-300),
                corr_post_error_estimate: correlation(&m.post, samples),
                corr_ext_error_signal: correlation(&m.ext, samples),
            }
        })
        .collect();
    Ok(TrackingReport {
        config: cfg.clone(),
        points,
    })
}
