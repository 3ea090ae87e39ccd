//! Source model, channel, and error metrics.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrices::{MatrixKind, SensingMatrix};

/// One symbol of the extended alphabet `C ∪ {0}` with its prior mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
    pub ln_prob: f64,
}

/// Discrete sparse source: each element is zero with probability `1 - s/L`
/// and otherwise uniform over the nonzero alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorSpec", into = "PriorSpec")]
pub struct Prior {
    alphabet: Vec<f64>,
    len: usize,
    sparsity: usize,
    atoms: Vec<Atom>,
}

/// Serialized form of a [`Prior`]: `{alphabet: [..], L, s}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alphabet: Vec<f64>,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "s")]
    pub sparsity: usize,
}

impl TryFrom<PriorSpec> for Prior {
    type Error = Error;

    fn try_from(spec: PriorSpec) -> Result<Self> {
        Prior::new(spec.alphabet, spec.len, spec.sparsity)
    }
}

impl From<Prior> for PriorSpec {
    fn from(prior: Prior) -> Self {
        PriorSpec {
            alphabet: prior.alphabet,
            len: prior.len,
            sparsity: prior.sparsity,
        }
    }
}

impl Prior {
    pub fn new(alphabet: Vec<f64>, len: usize, sparsity: usize) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(Error::InvalidConfig("alphabet must not be empty".into()));
        }
        if alphabet.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("alphabet"));
        }
        if alphabet.contains(&0.0) {
            return Err(Error::InvalidConfig(
                "zero is implicit and must not appear in the nonzero alphabet".into(),
            ));
        }
        if alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "alphabet symbols must be strictly increasing".into(),
            ));
        }
        if len == 0 {
            return Err(Error::InvalidConfig("L must be positive".into()));
        }
        if sparsity > len {
            return Err(Error::InvalidConfig(format!(
                "sparsity s = {sparsity} exceeds dimension L = {len}"
            )));
        }

        let activity = sparsity as f64 / len as f64;
        let p_zero = 1.0 - activity;
        let p_symbol = activity / alphabet.len() as f64;

        let mut atoms: Vec<Atom> = alphabet
            .iter()
            .map(|&value| Atom {
                value,
                prob: p_symbol,
                ln_prob: p_symbol.ln(),
            })
            .collect();
        let zero_at = alphabet.partition_point(|&c| c < 0.0);
        atoms.insert(
            zero_at,
            Atom {
                value: 0.0,
                prob: p_zero,
                ln_prob: p_zero.ln(),
            },
        );

        Ok(Prior {
            alphabet,
            len,
            sparsity,
            atoms,
        })
    }

    /// The `{-1, +1}` alphabet used throughout the experiments.
    pub fn bpsk(len: usize, sparsity: usize) -> Result<Self> {
        Prior::new(vec![-1.0, 1.0], len, sparsity)
    }

    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    /// Activity ratio `s/L`.
    pub fn activity(&self) -> f64 {
        self.sparsity as f64 / self.len as f64
    }

    pub fn p_zero(&self) -> f64 {
        1.0 - self.activity()
    }

    pub fn p_symbol(&self) -> f64 {
        self.activity() / self.alphabet.len() as f64
    }

    /// Symbols of `C₀` in increasing order together with their prior masses.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Mean symbol energy `E{x²}`.
    pub fn signal_power(&self) -> f64 {
        self.p_symbol() * self.alphabet.iter().map(|c| c * c).sum::<f64>()
    }

    /// Smallest distance between neighbouring symbols of `C₀`.
    pub fn min_spacing(&self) -> f64 {
        self.atoms
            .windows(2)
            .map(|w| w[1].value - w[0].value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn spec(&self) -> PriorSpec {
        self.clone().into()
    }
}

/// A belief about `x`: mean vector plus a single average error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: DVector<f64>,
    pub variance: f64,
}

impl Estimate {
    pub fn new(mean: DVector<f64>, variance: f64) -> Self {
        Estimate { mean, variance }
    }
}

/// One realized trial `(A, x, y, σ_n²)`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub matrix: SensingMatrix,
    pub x_true: DVector<f64>,
    pub y: DVector<f64>,
    pub sigma_n_sq: f64,
}

impl ProblemInstance {
    /// Draws matrix, signal and noise from `rng`, in that order.
    pub fn generate<R: Rng + ?Sized>(
        rng: &mut R,
        prior: &Prior,
        kind: MatrixKind,
        rows: usize,
        sigma_n_sq: f64,
    ) -> Result<Self> {
        let matrix = SensingMatrix::generate(rng, kind, rows, prior.len())?;
        let x_true = sample_signal(rng, prior)?;
        let y = transmit(&matrix, &x_true, sigma_n_sq, rng)?;
        Ok(ProblemInstance {
            matrix,
            x_true,
            y,
            sigma_n_sq,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// Draws a vector with exactly `s` nonzeros on a uniformly chosen support,
/// each nonzero uniform over the alphabet.
pub fn sample_signal<R: Rng + ?Sized>(rng: &mut R, prior: &Prior) -> Result<DVector<f64>> {
    let (len, s) = (prior.len(), prior.sparsity());
    if s > len {
        return Err(Error::InvalidConfig(format!("s = {s} > L = {len}")));
    }
    let mut x = DVector::zeros(len);
    let alphabet = prior.alphabet();
    for i in rand::seq::index::sample(rng, len, s).into_iter() {
        x[i] = alphabet[rng.random_range(0..alphabet.len())];
    }
    Ok(x)
}

/// `len` i.i.d. standard normal draws.
pub fn standard_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// `y = A x + σ_n w` for a given standard-normal direction `w`.
pub fn observe(
    matrix: &SensingMatrix,
    x: &DVector<f64>,
    sigma_n_sq: f64,
    unit_noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("observe: signal", matrix.cols(), x.len())?;
    check_len("observe: noise", matrix.rows(), unit_noise.len())?;
    if !(sigma_n_sq >= 0.0) || !sigma_n_sq.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise variance must be finite and non-negative, got {sigma_n_sq}"
        )));
    }
    let mut y = matrix.a() * x;
    if sigma_n_sq > 0.0 {
        y.axpy(sigma_n_sq.sqrt(), unit_noise, 1.0);
    }
    Ok(y)
}

/// `y = A x + n` with `n` i.i.d. `N(0, σ_n²)`.
///
/// The noise vector is always drawn (even when `σ_n² = 0`) so the stream
/// position after the call does not depend on the noise level.
pub fn transmit<R: Rng + ?Sized>(
    matrix: &SensingMatrix,
    x: &DVector<f64>,
    sigma_n_sq: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_len("transmit: signal", matrix.cols(), x.len())?;
    let w = standard_noise(rng, matrix.rows());
    observe(matrix, x, sigma_n_sq, &w)
}

/// Number of positions where the two vectors differ.
pub fn symbol_errors(x_hat: &DVector<f64>, x_true: &DVector<f64>) -> Result<usize> {
    check_len("symbol_errors", x_true.len(), x_hat.len())?;
    Ok(x_hat.iter().zip(x_true.iter()).filter(|(a, b)| a != b).count())
}

/// Symbol error rate: fraction of positions where the vectors differ.
pub fn ser(x_hat: &DVector<f64>, x_true: &DVector<f64>) -> Result<f64> {
    if x_true.is_empty() {
        check_len("ser", x_true.len(), x_hat.len())?;
        return Ok(0.0);
    }
    Ok(symbol_errors(x_hat, x_true)? as f64 / x_true.len() as f64)
}

/// Nearest symbol of `C₀`. Exact ties go to the symbol with larger prior
/// mass, then to the one with smaller magnitude.
pub fn quantize_scalar(v: f64, prior: &Prior) -> f64 {
    let mut best = prior.atoms()[0];
    let mut best_dist = (v - best.value).abs();
    for &atom in &prior.atoms()[1..] {
        let dist = (v - atom.value).abs();
        let better = dist < best_dist
            || (dist == best_dist
                && (atom.prob > best.prob
                    || (atom.prob == best.prob && atom.value.abs() < best.value.abs())));
        if better {
            best = atom;
            best_dist = dist;
        }
    }
    best.value
}

pub fn quantize(v: &DVector<f64>, prior: &Prior) -> DVector<f64> {
    v.map(|vi| quantize_scalar(vi, prior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::SensingMatrix;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prior_probabilities() {
        let p = Prior::bpsk(258, 20).unwrap();
        let total: f64 = p.atoms().iter().map(|a| a.prob).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(
            p.atoms().iter().map(|a| a.value).collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0]
        );
        assert!((p.signal_power() - 20.0 / 258.0).abs() < 1e-16);

        let p = Prior::new(vec![-3.0, -1.0, 1.0, 3.0], 10, 4).unwrap();
        let total: f64 = p.atoms().iter().map(|a| a.prob).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((p.signal_power() - 0.4 * 5.0).abs() < 1e-15);
    }

    #[test]
    fn prior_rejects_bad_alphabets() {
        assert!(Prior::new(vec![], 4, 1).is_err());
        assert!(Prior::new(vec![0.0, 1.0], 4, 1).is_err());
        assert!(Prior::new(vec![1.0, -1.0], 4, 1).is_err());
        assert!(Prior::new(vec![1.0, 1.0], 4, 1).is_err());
        assert!(Prior::new(vec![1.0], 4, 5).is_err());
        assert!(Prior::new(vec![1.0], 0, 0).is_err());
    }

    #[test]
    fn prior_spec_round_trip() {
        let p = Prior::bpsk(258, 20).unwrap();
        assert_eq!(Prior::try_from(p.spec()).unwrap(), p);
        let bad = PriorSpec {
            alphabet: vec![1.0],
            len: 3,
            sparsity: 4,
        };
        assert!(Prior::try_from(bad).is_err());
    }

    #[test]
    fn sample_signal_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample_signal(&mut rng, &Prior::bpsk(17, 0).unwrap()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));

        let x = sample_signal(&mut rng, &Prior::new(vec![1.0], 9, 9).unwrap()).unwrap();
        assert!(x.iter().all(|&v| v == 1.0));

        let x = sample_signal(&mut rng, &Prior::bpsk(258, 20).unwrap()).unwrap();
        assert_eq!(x.iter().filter(|&&v| v != 0.0).count(), 20);
        assert!(x.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0));
    }

    #[test]
    fn sample_signal_activity_rate() {
        let prior = Prior::bpsk(10, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut active = [0usize; 10];
        let mut plus = 0usize;
        for _ in 0..draws {
            let x = sample_signal(&mut rng, &prior).unwrap();
            for (i, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    active[i] += 1;
                }
                if v > 0.0 {
                    plus += 1;
                }
            }
        }
        let p = 0.3;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for count in active {
            let rate = count as f64 / draws as f64;
            assert!((rate - p).abs() < 3.0 * se, "rate {rate}");
        }
        let total = (3 * draws) as f64;
        let se_sign = (0.25 / total).sqrt();
        assert!((plus as f64 / total - 0.5).abs() < 3.0 * se_sign);
    }

    #[test]
    fn transmit_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eye = SensingMatrix::from_dense(DMatrix::identity(5, 5)).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0, 1.0]);
        assert_eq!(transmit(&eye, &x, 0.0, &mut rng).unwrap(), x);
        let zero = DVector::zeros(5);
        assert_eq!(transmit(&eye, &zero, 0.0, &mut rng).unwrap(), zero);
        assert!(transmit(&eye, &DVector::zeros(4), 0.0, &mut rng).is_err());
    }

    #[test]
    fn transmit_matches_reference_draw_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = SensingMatrix::gaussian_normalized(&mut rng, 2, 4).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let sigma_n_sq = 0.25;

        let mut a = ChaCha8Rng::seed_from_u64(99);
        let y = transmit(&m, &x, sigma_n_sq, &mut a).unwrap();

        let mut b = ChaCha8Rng::seed_from_u64(99);
        let n0: f64 = rand::Rng::sample(&mut b, StandardNormal);
        let n1: f64 = rand::Rng::sample(&mut b, StandardNormal);
        let am = m.a();
        let y0 = am[(0, 1)] - am[(0, 3)] + 0.5 * n0;
        let y1 = am[(1, 1)] - am[(1, 3)] + 0.5 * n1;
        assert!((y[0] - y0).abs() < 1e-15);
        assert!((y[1] - y1).abs() < 1e-15);
    }

    #[test]
    fn ser_examples() {
        let a = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
        assert_eq!(ser(&a, &a).unwrap(), 0.0);
        let b = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(ser(&a, &b).unwrap(), 1.0);
        let c = DVector::from_vec(vec![1.0, 0.0, -1.0, 1.0]);
        assert_eq!(ser(&a, &c).unwrap(), 0.25);
        assert!(ser(&a, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn quantize_examples() {
        let prior = Prior::bpsk(258, 20).unwrap();
        assert_eq!(quantize_scalar(0.6, &prior), 1.0);
        assert_eq!(quantize_scalar(0.5, &prior), 0.0);
        assert_eq!(quantize_scalar(-0.5, &prior), 0.0);
        assert_eq!(quantize_scalar(-0.49, &prior), 0.0);
        assert_eq!(quantize_scalar(-7.0, &prior), -1.0);

        // With p0 < p_c the tie at 0.5 goes to the symbol.
        let dense = Prior::bpsk(10, 9).unwrap();
        assert_eq!(quantize_scalar(0.5, &dense), 1.0);
        // Equal mass: smaller magnitude wins.
        let even = Prior::new(vec![1.0], 2, 1).unwrap();
        assert_eq!(quantize_scalar(0.5, &even), 0.0);
    }

    proptest! {
        #[test]
        fn quantize_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let prior = Prior::new(vec![-2.0, -1.0, 1.0, 2.0], 40, 8).unwrap();
            let v = DVector::from_vec(v);
            let q = quantize(&v, &prior);
            prop_assert_eq!(quantize(&q, &prior), q);
        }

        #[test]
        fn ser_symmetric(a in proptest::collection::vec(-1i8..=1, 12), b in proptest::collection::vec(-1i8..=1, 12)) {
            let a = DVector::from_iterator(12, a.into_iter().map(f64::from));
            let b = DVector::from_iterator(12, b.into_iter().map(f64::from));
            let ab = ser(&a, &b).unwrap();
            prop_assert_eq!(ab, ser(&b, &a).unwrap());
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn noiseless_transmit_is_linear(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = SensingMatrix::gaussian_normalized(&mut rng, 6, 10).unwrap();
            let x1 = standard_noise(&mut rng, 10);
            let x2 = standard_noise(&mut rng, 10);
            let y12 = transmit(&m, &(&x1 + &x2), 0.0, &mut rng).unwrap();
            let y1 = transmit(&m, &x1, 0.0, &mut rng).unwrap();
            let y2 = transmit(&m, &x2, 0.0, &mut rng).unwrap();
            prop_assert!((y12 - y1 - y2).amax() < 1e-12);
        }
    }
}
