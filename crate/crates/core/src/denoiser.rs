//! Symbol-wise Bayesian denoiser and the extrinsic combiner.
//!
//! For an observation `z = x + e`, `e ~ N(0, σ²)`, `x` drawn from the
//! discrete sparse prior, the soft value is the exact posterior mean
//! `E{x|z}` and its spread is `var{x|z}`. Weights are formed in the log
//! domain so that tiny variances or far-out observations cannot underflow.

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::model::{Estimate, Prior};
use crate::{V_MAX, V_MIN};

/// Minimum relative information gain required by [`extrinsic`].
pub const EXTRINSIC_GAP: f64 = 1e-6;

/// Clamp range for the diagonal of the LMMSE cascade in
/// [`unbias_elementwise`].
pub const K_DIAG_MIN: f64 = 1e-12;
pub const K_DIAG_MAX: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub post_mean: DVector<f64>,
    /// Average posterior variance over all elements.
    pub post_var_mean: f64,
    pub post_var_elem: DVector<f64>,
}

fn check_variance(sigma_sq: f64) -> Result<f64> {
    if !sigma_sq.is_finite() {
        return Err(Error::NonFinite("denoiser variance"));
    }
    if sigma_sq <= 0.0 {
        return Err(Error::NonPositiveVariance(sigma_sq));
    }
    Ok(sigma_sq.clamp(V_MIN, V_MAX))
}

// Assumes a validated variance.
#[inline]
fn posterior(z: f64, sigma_sq: f64, prior: &Prior) -> (f64, f64) {
    let atoms = prior.atoms();
    let inv_two_var = 0.5 / sigma_sq;

    // The mean is formed as an offset from the most likely atom: in the
    // saturated regime the offset is tiny and computed to full relative
    // precision, which keeps the result monotone in z.
    let mut max_log = f64::NEG_INFINITY;
    let mut anchor = 0.0;
    for atom in atoms {
        let d = z - atom.value;
        let lw = atom.ln_prob - d * d * inv_two_var;
        if lw > max_log {
            max_log = lw;
            anchor = atom.value;
        }
    }

    let (mut norm, mut first) = (0.0, 0.0);
    let mut stack = [0.0f64; 16];
    let mut heap: Vec<f64>;
    let w: &mut [f64] = if atoms.len() <= stack.len() {
        &mut stack[..atoms.len()]
    } else {
        heap = vec![0.0; atoms.len()];
        &mut heap
    };
    for (wi, atom) in w.iter_mut().zip(atoms) {
        let d = z - atom.value;
        *wi = (atom.ln_prob - d * d * inv_two_var - max_log).exp();
        norm += *wi;
        first += *wi * (atom.value - anchor);
    }
    let offset = first / norm;
    let mut second = 0.0;
    for (wi, atom) in w.iter().zip(atoms) {
        let d = (atom.value - anchor) - offset;
        second += wi * d * d;
    }
    (anchor + offset, second / norm)
}

/// Posterior mean and variance of a single element.
pub fn soft_value(z: f64, sigma_sq: f64, prior: &Prior) -> Result<(f64, f64)> {
    if !z.is_finite() {
        return Err(Error::NonFinite("soft value input"));
    }
    let sigma_sq = check_variance(sigma_sq)?;
    Ok(posterior(z, sigma_sq, prior))
}

/// [`soft_value`] applied to every element, plus the average variance.
pub fn soft_value_vec(z: &DVector<f64>, sigma_sq: f64, prior: &Prior) -> Result<DenoiseOutput> {
    let sigma_sq = check_variance(sigma_sq)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("soft value input"));
    }
    let mut post_mean = DVector::zeros(z.len());
    let mut post_var_elem = DVector::zeros(z.len());
    for (i, &zi) in z.iter().enumerate() {
        let (m, v) = posterior(zi, sigma_sq, prior);
        post_mean[i] = m;
        post_var_elem[i] = v;
    }
    let post_var_mean = if z.is_empty() {
        0.0
    } else {
        post_var_elem.sum() / z.len() as f64
    };
    Ok(DenoiseOutput {
        post_mean,
        post_var_mean,
        post_var_elem,
    })
}

/// `d/dz E{x|z}`, which for Gaussian noise equals `var{x|z} / σ²`.
pub fn soft_value_deriv(z: f64, sigma_sq: f64, prior: &Prior) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("soft value input"));
    }
    let sigma_sq = check_variance(sigma_sq)?;
    Ok(posterior(z, sigma_sq, prior).1 / sigma_sq)
}

/// Result of [`extrinsic`]; `clamped` is set when any clamp rule fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrinsic {
    pub estimate: Estimate,
    pub clamped: bool,
}

/// Removes the prior contribution from a posterior estimate.
///
/// `σ²_ext = (1/σ²_post − 1/σ²_pri)⁻¹` and
/// `x_ext = σ²_ext (x_post/σ²_post − x_pri/σ²_pri)`.
///
/// The posterior variance is first capped at `(1 − EXTRINSIC_GAP)·σ²_pri`,
/// and the resulting extrinsic variance clamped into `[V_MIN, V_MAX]`. A
/// posterior that is no more certain than the prior yields `V_MAX`. The mean
/// is always formed with the unclamped extrinsic variance, so it stays finite.
pub fn extrinsic(post: &Estimate, pri: &Estimate) -> Result<Extrinsic> {
    check_len("extrinsic", pri.mean.len(), post.mean.len())?;
    for v in [post.variance, pri.variance] {
        if !v.is_finite() {
            return Err(Error::NonFinite("extrinsic variance"));
        }
        if v <= 0.0 {
            return Err(Error::NonPositiveVariance(v));
        }
    }
    let ceiling = (1.0 - EXTRINSIC_GAP) * pri.variance;
    let no_gain = post.variance >= pri.variance;
    let post_var = post.variance.min(ceiling);

    let raw = 1.0 / (1.0 / post_var - 1.0 / pri.variance);
    let variance = if no_gain { V_MAX } else { raw.clamp(V_MIN, V_MAX) };
    let clamped = post.variance > ceiling || variance != raw;

    let (a, b) = (raw / post_var, raw / pri.variance);
    let mean = post.mean.zip_map(&pri.mean, |xp, xq| a * xp - b * xq);
    Ok(Extrinsic {
        estimate: Estimate { mean, variance },
        clamped,
    })
}

/// Per-element bias compensation of an LMMSE estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Unbiased {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    /// Number of diagonal entries that had to be clamped into
    /// `[K_DIAG_MIN, K_DIAG_MAX]`.
    pub clamp_events: usize,
}

/// `x_U = x_pri + (x_post − x_pri)/K_ii`, `σ²_U = σ²_pri (1/K_ii − 1)`.
pub fn unbias_elementwise(
    x_pri: &DVector<f64>,
    x_post: &DVector<f64>,
    k_diag: &DVector<f64>,
    sigma_pri_sq: f64,
) -> Result<Unbiased> {
    check_len("unbias: posterior", x_pri.len(), x_post.len())?;
    check_len("unbias: diagonal", x_pri.len(), k_diag.len())?;
    let mut clamp_events = 0;
    let k = k_diag.map(|kii| {
        let c = kii.clamp(K_DIAG_MIN, K_DIAG_MAX);
        if c != kii {
            clamp_events += 1;
        }
        c
    });
    let mean = DVector::from_fn(x_pri.len(), |i, _| {
        x_pri[i] + (x_post[i] - x_pri[i]) / k[i]
    });
    let variance = k.map(|kii| sigma_pri_sq * (1.0 / kii - 1.0));
    Ok(Unbiased {
        mean,
        variance,
        clamp_events,
    })
}
