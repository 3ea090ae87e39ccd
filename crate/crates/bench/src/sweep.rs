use std::ops::AddAssign;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use turbocs_core::matrices::SensingMatrix;
use turbocs_core::model::{observe, sample_signal, standard_noise, symbol_errors};
use turbocs_core::recover::{recover, Algorithm, RecoveryConfig};

use crate::stats::{wilson_interval, Z95};
use crate::{BenchError, Result, SweepConfig};

/// Stream index reserved for the shared matrix when matrices are not
/// redrawn per trial.
const SHARED_MATRIX_STREAM: u64 = u64::MAX;

/// One (algorithm, SNR) point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    /// Trials that completed; failed trials are excluded from the counts.
    pub trials: u64,
    pub failures: u64,
    pub symbol_errors: u64,
    pub ser: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_iters: f64,
    /// Clamp events per iteration run.
    pub clamp_rate: f64,
    pub wall_time_s: f64,
}

impl Cell {
    pub fn ci_width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub version: String,
    pub master_seed: u64,
    pub config: SweepConfig,
    /// Algorithm-major, in configuration order.
    pub cells: Vec<Cell>,
}

impl SweepResult {
    pub fn cell(&self, algorithm: Algorithm, snr_db: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && c.snr_db == snr_db)
    }

    /// `(snr_db, ser)` pairs of one algorithm, in grid order.
    pub fn curve(&self, algorithm: Algorithm) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.algorithm == algorithm)
            .map(|c| (c.snr_db, c.ser))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    trials: u64,
    failures: u64,
    errors: u64,
    iters: u64,
    clamps: u64,
    nanos: u128,
}

impl AddAssign<&Tally> for Tally {
    fn add_assign(&mut self, o: &Tally) {
        self.trials += o.trials;
        self.failures += o.failures;
        self.errors += o.errors;
        self.iters += o.iters;
        self.clamps += o.clamps;
        self.nanos += o.nanos;
    }
}

/// Matrix (when redrawn), signal and unit noise of one trial. Identical for
/// every algorithm and SNR point of a sweep.
pub struct TrialInstance {
    pub matrix: Option<SensingMatrix>,
    pub x_true: DVector<f64>,
    pub unit_noise: DVector<f64>,
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Regenerates the random draws of trial `index`.
pub fn trial_instance(cfg: &SweepConfig, index: u64) -> Result<TrialInstance> {
    let prior = cfg.prior()?;
    let mut rng = trial_rng(cfg.master_seed, index);
    let matrix = if cfg.redraw_matrix_per_trial {
        Some(SensingMatrix::generate(&mut rng, cfg.matrix_kind, cfg.rows, cfg.len)?)
    } else {
        None
    };
    let x_true = sample_signal(&mut rng, &prior)?;
    let unit_noise = standard_noise(&mut rng, cfg.rows);
    Ok(TrialInstance {
        matrix,
        x_true,
        unit_noise,
    })
}

/// The matrix shared by all trials when `redraw_matrix_per_trial` is off.
pub fn shared_matrix(cfg: &SweepConfig) -> Result<SensingMatrix> {
    let mut rng = trial_rng(cfg.master_seed, SHARED_MATRIX_STREAM);
    Ok(SensingMatrix::generate(&mut rng, cfg.matrix_kind, cfg.rows, cfg.len)?)
}

pub fn sigma_n_sq(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Runs every configured algorithm on `trials_per_point` paired trials at
/// every SNR point.
///
/// Trial `t` draws from stream `t` of the master seed, and the same noise
/// direction is rescaled for every SNR point. Error counts are integers and
/// summed exactly, so the result does not depend on `workers`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let prior = cfg.prior()?;
    let shared = (!cfg.redraw_matrix_per_trial)
        .then(|| shared_matrix(cfg))
        .transpose()?;
    let n_cells = cfg.algorithms.len() * cfg.snr_db_grid.len();
    let rcfgs: Vec<RecoveryConfig> = cfg
        .algorithms
        .iter()
        .map(|&a| RecoveryConfig::new(a).with_iters(cfg.max_iters))
        .collect();

    let run_trial = |index: u64| -> Result<Vec<Tally>> {
        let inst = trial_instance(cfg, index)?;
        let matrix = inst.matrix.as_ref().or(shared.as_ref()).expect("matrix available");
        let mut tallies = vec![Tally::default(); n_cells];
        for (si, &snr) in cfg.snr_db_grid.iter().enumerate() {
            let noise = sigma_n_sq(snr);
            let y = observe(matrix, &inst.x_true, noise, &inst.unit_noise)?;
            for (ai, rcfg) in rcfgs.iter().enumerate() {
                let t = &mut tallies[ai * cfg.snr_db_grid.len() + si];
                let start = cfg.timing.then(Instant::now);
                match recover(&y, matrix, noise, &prior, rcfg) {
                    Ok(out) => {
                        t.trials += 1;
                        t.errors += symbol_errors(&out.x_hat, &inst.x_true)? as u64;
                        t.iters += out.iters_run as u64;
                        t.clamps += out.clamp_events as u64;
                    }
                    Err(_) => t.failures += 1,
                }
                if let Some(s) = start {
                    t.nanos += s.elapsed().as_nanos();
                }
            }
        }
        Ok(tallies)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    let totals = pool.install(|| {
        (0..cfg.trials_per_point as u64)
            .into_par_iter()
            .map(run_trial)
            .try_reduce(
                || vec![Tally::default(); n_cells],
                |mut acc, part| {
                    for (a, p) in acc.iter_mut().zip(&part) {
                        *a += p;
                    }
                    Ok(acc)
                },
            )
    })?;

    let grid_len = cfg.snr_db_grid.len();
    let cells = totals
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let symbols = t.trials * cfg.len as u64;
            let (ci_lo, ci_hi) = wilson_interval(t.errors, symbols, Z95);
            let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            Cell {
                algorithm: cfg.algorithms[i / grid_len],
                snr_db: cfg.snr_db_grid[i % grid_len],
                trials: t.trials,
                failures: t.failures,
                symbol_errors: t.errors,
                ser: ratio(t.errors, symbols),
                ci_lo,
                ci_hi,
                mean_iters: ratio(t.iters, t.trials),
                clamp_rate: ratio(t.clamps, t.iters),
                wall_time_s: t.nanos as f64 * 1e-9,
            }
        })
        .collect();

    Ok(SweepResult {
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        cells,
    })
}
