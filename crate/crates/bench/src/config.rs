use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use turbocs_core::matrices::MatrixKind;
use turbocs_core::model::Prior;
use turbocs_core::recover::Algorithm;

use crate::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "K")]
    pub rows: usize,
    #[serde(rename = "s")]
    pub sparsity: usize,
    /// Nonzero symbols; zero is implied.
    pub alphabet: Vec<f64>,
    pub matrix_kind: MatrixKind,
    /// Draw a fresh matrix for every trial; otherwise one matrix, derived
    /// from the master seed, is shared by all trials.
    pub redraw_matrix_per_trial: bool,
    /// `10·log₁₀(1/σ_n²)` in dB.
    pub snr_db_grid: Vec<f64>,
    pub trials_per_point: usize,
    pub algorithms: Vec<Algorithm>,
    pub max_iters: usize,
    pub master_seed: u64,
    pub workers: usize,
    /// Record per-cell wall-clock time. Off by default because timings are
    /// the only non-reproducible part of a result.
    #[serde(default)]
    pub timing: bool,
}

impl Default for SweepConfig {
    /// The partial-orthogonal setup of the reference experiment.
    fn default() -> Self {
        SweepConfig {
            len: 258,
            rows: 129,
            sparsity: 20,
            alphabet: vec![-1.0, 1.0],
            matrix_kind: MatrixKind::PartialOrthogonal,
            redraw_matrix_per_trial: true,
            snr_db_grid: snr_grid(9.0, 15.0, 0.5).expect("valid default grid"),
            trials_per_point: 2000,
            algorithms: vec![Algorithm::Tms, Algorithm::Bamp, Algorithm::Tsr, Algorithm::Iht],
            max_iters: 50,
            master_seed: 1,
            workers: 1,
            timing: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if !(self.sparsity <= self.rows && self.rows <= self.len) {
            return fail(format!(
                "need s <= K <= L, got s = {}, K = {}, L = {}",
                self.sparsity, self.rows, self.len
            ));
        }
        if self.snr_db_grid.is_empty() {
            return fail("SNR grid is empty".into());
        }
        if self.snr_db_grid.iter().any(|v| !v.is_finite()) {
            return fail("SNR grid contains non-finite values".into());
        }
        if self.trials_per_point == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms selected".into());
        }
        if self.max_iters == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        self.prior()?;
        Ok(())
    }

    pub fn prior(&self) -> Result<Prior> {
        Ok(Prior::new(self.alphabet.clone(), self.len, self.sparsity)?)
    }
}

/// `start, start + step, …` up to and including `stop` (with a small
/// tolerance), rounded to nine decimals so the grid prints cleanly.
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(BenchError::Config(format!("SNR step must be positive, got {step}")));
    }
    if !start.is_finite() || !stop.is_finite() {
        return Err(BenchError::Config("SNR range must be finite".into()));
    }
    let count = ((stop - start) / step + 1e-9).floor();
    if count < 0.0 {
        return Err(BenchError::Config(format!("empty SNR range {start}..{stop}")));
    }
    if count > 1e6 {
        return Err(BenchError::Config("SNR grid has more than a million points".into()));
    }
    Ok((0..=count as usize)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, T::Err> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| BenchError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(BenchError::Config(format!("line {}: empty key", n + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&std::fs::read_to_string(path)?)
}
