//! The diagnostic suite run by `turbocs verify`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use turbocs_core::diagnostics::{
    verify_extrinsic_unbias, verify_stein_identity, verify_variance_tracking, IdentityMethod,
    IdentityReport, TrackingConfig, TrackingReport,
};
use turbocs_core::matrices::MatrixKind;
use turbocs_core::model::{standard_noise, Prior, ProblemInstance};

use crate::Result;

pub const STEIN_QUADRATURE_TOL: f64 = 1e-8;
pub const STEIN_MC_SIGMAS: f64 = 3.0;
pub const UNBIAS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub quadrature_nodes: usize,
    pub mc_samples: usize,
    pub unbias_instances: usize,
    pub tracking_trials: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 1,
            quadrature_nodes: 200,
            mc_samples: 1_000_000,
            unbias_instances: 100,
            tracking_trials: 200,
        }
    }
}

/// A pass/fail check: `value < threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Gate {
    fn below(name: String, value: f64, threshold: f64) -> Self {
        Gate {
            name,
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UnbiasSummary {
    pub instances: usize,
    pub max_discrepancy: f64,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub gates: Vec<Gate>,
    pub stein: Vec<IdentityReport>,
    pub unbias: UnbiasSummary,
    /// Soft diagnostic; not gated.
    pub tracking: TrackingReport,
    pub passed: bool,
}

pub const STEIN_VARIANCES: [f64; 3] = [0.01, 0.1, 1.0];

pub fn reference_prior() -> Prior {
    Prior::bpsk(258, 20).expect("valid reference prior")
}

/// Quadrature and Monte-Carlo evaluations of the Gaussian identity at each
/// of [`STEIN_VARIANCES`].
pub fn stein_checks(cfg: &SuiteConfig) -> Result<Vec<IdentityReport>> {
    let prior = reference_prior();
    let mut out = Vec::new();
    for (i, &var) in STEIN_VARIANCES.iter().enumerate() {
        out.push(verify_stein_identity(&prior, var, IdentityMethod::Quadrature, cfg.quadrature_nodes)?);
        let method = IdentityMethod::MonteCarlo {
            seed: cfg.seed.wrapping_add(i as u64),
        };
        out.push(verify_stein_identity(&prior, var, method, cfg.mc_samples)?);
    }
    Ok(out)
}

/// Bias compensation against extrinsic computation on random instances
/// (L = 32, K = 16, s = 4), alternating matrix ensembles and cycling the
/// prior variance through `{0.01, s/L, 1}`.
pub fn unbias_checks(seed: u64, instances: usize) -> Result<UnbiasSummary> {
    let prior = Prior::bpsk(32, 4)?;
    let variances = [0.01, prior.activity(), 1.0];
    let kinds = [MatrixKind::PartialOrthogonal, MatrixKind::GeneralDense];
    let mut summary = UnbiasSummary {
        instances,
        max_discrepancy: 0.0,
        clamp_events: 0,
    };
    for i in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let inst = ProblemInstance::generate(&mut rng, &prior, kinds[i % 2], 16, 0.01)?;
        let var = variances[i % 3];
        let x_pri = &inst.x_true + standard_noise(&mut rng, 32) * var.sqrt();
        let r = verify_extrinsic_unbias(&inst, &x_pri, var)?;
        summary.max_discrepancy = summary.max_discrepancy.max(r.max_discrepancy);
        summary.clamp_events += r.clamp_events;
    }
    Ok(summary)
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let stein = stein_checks(cfg)?;
    let unbias = unbias_checks(cfg.seed, cfg.unbias_instances)?;
    let tracking = verify_variance_tracking(&TrackingConfig {
        prior: reference_prior(),
        kind: MatrixKind::PartialOrthogonal,
        rows: 129,
        snr_db: 12.0,
        trials: cfg.tracking_trials,
        iters: 10,
        seed: cfg.seed,
    })?;

    let mut gates = Vec::new();
    for (i, r) in stein.iter().enumerate() {
        let var = STEIN_VARIANCES[i / 2];
        gates.push(match r.std_err {
            None => Gate::below(
                format!("stein quadrature rel_err, sigma_e^2 = {var}"),
                r.rel_err,
                STEIN_QUADRATURE_TOL,
            ),
            Some(se) => Gate::below(
                format!("stein monte carlo |lhs - rhs| / std_err, sigma_e^2 = {var}"),
                r.abs_err / se,
                STEIN_MC_SIGMAS,
            ),
        });
    }
    gates.push(Gate::below(
        "extrinsic vs unbiasing max relative discrepancy".into(),
        unbias.max_discrepancy,
        UNBIAS_TOL,
    ));
    let passed = gates.iter().all(|g| g.passed);
    Ok(SuiteReport {
        config: cfg.clone(),
        gates,
        stein,
        unbias,
        tracking,
        passed,
    })
}
