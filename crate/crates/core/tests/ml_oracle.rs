use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use turbocs_core::matrices::{MatrixKind, SensingMatrix};
use turbocs_core::model::{Prior, ProblemInstance};
use turbocs_core::recover::{run_iht, run_tms, Algorithm, RecoveryConfig};

// argmin ‖y − A x‖² over x ∈ C₀^L with at most s nonzeros.
fn exhaustive_ml(y: &DVector<f64>, a: &SensingMatrix, prior: &Prior) -> DVector<f64> {
    fn search(
        start: usize,
        left: usize,
        x: &mut DVector<f64>,
        ctx: &(&DVector<f64>, &SensingMatrix, &[f64]),
        best: &mut (f64, DVector<f64>),
    ) {
        let cost = (ctx.0 - ctx.1.a() * &*x).norm_squared();
        if cost < best.0 {
            *best = (cost, x.clone());
        }
        if left == 0 {
            return;
        }
        for i in start..x.len() {
            for &c in ctx.2 {
                x[i] = c;
                search(i + 1, left - 1, x, ctx, best);
            }
            x[i] = 0.0;
        }
    }
    let mut x = DVector::zeros(prior.len());
    let mut best = (f64::INFINITY, x.clone());
    search(0, prior.sparsity(), &mut x, &(y, a, prior.alphabet()), &mut best);
    best.1
}

fn agreement(kind: MatrixKind, trials: u64, sigma_n_sq: f64, algorithm: Algorithm) -> f64 {
    let prior = Prior::bpsk(8, 1).unwrap();
    let cfg = RecoveryConfig::new(algorithm);
    let mut hits = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let inst = ProblemInstance::generate(&mut rng, &prior, kind, 4, sigma_n_sq).unwrap();
        let ml = exhaustive_ml(&inst.y, &inst.matrix, &prior);
        let out = match algorithm {
            Algorithm::Tms => run_tms(&inst.y, &inst.matrix, sigma_n_sq, &prior, &cfg),
            Algorithm::Iht => run_iht(&inst.y, &inst.matrix, sigma_n_sq, &prior, &cfg),
            _ => unreachable!(),
        }
        .unwrap();
        hits += usize::from(out.x_hat == ml);
    }
    hits as f64 / trials as f64
}

#[test]
fn oracle_finds_the_truth_without_noise() {
    let prior = Prior::new(vec![-1.0, 1.0], 8, 2).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst =
            ProblemInstance::generate(&mut rng, &prior, MatrixKind::GeneralDense, 4, 1e-12).unwrap();
        assert_eq!(exhaustive_ml(&inst.y, &inst.matrix, &prior), inst.x_true);
    }
}

// At L = 8 the scalar variance recursion is a poor model of the actual
// error and TMS occasionally settles on a wrong sparse vector. These floors
// guard against regressions; the 99 % target is reported by the acceptance
// suite.
#[test]
fn tms_agrees_with_ml_on_small_instances() {
    let rate = agreement(MatrixKind::PartialOrthogonal, 1000, 1e-4, Algorithm::Tms);
    assert!(rate >= 0.96, "agreement {rate}");
    let rate = agreement(MatrixKind::GeneralDense, 1000, 1e-4, Algorithm::Tms);
    assert!(rate >= 0.9, "agreement {rate}");
}

#[test]
fn iht_support_recovery() {
    let rate = agreement(MatrixKind::PartialOrthogonal, 100, 1e-6, Algorithm::Iht);
    assert!(rate >= 0.9, "agreement {rate}");
}

