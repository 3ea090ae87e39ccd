use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::SensingMatrix;

/// Strategy for the `K×K` system `(σ²_pri A Aᵀ + σ_n² I) u = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmmseSolver {
    /// Eigendecompose `A Aᵀ` once per matrix; every iteration is then a
    /// diagonal scaling. Same result as `Cholesky` up to rounding.
    #[default]
    Spectral,
    /// Factor the system afresh each iteration and get the diagonal of the
    /// cascade from `L` triangular solves against the columns of `A`.
    Cholesky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmseUpdate {
    pub x_post: DVector<f64>,
    /// `(1/L) Σ K_ii` for `K = σ²_pri Aᵀ (σ²_pri A Aᵀ + σ_n² I)⁻¹ A`.
    pub mean_k_diag: f64,
}

/// One exact LMMSE step:
/// `x_post = x_pri + σ²_pri Aᵀ (σ²_pri A Aᵀ + σ_n² I)⁻¹ (y − A x_pri)`.
pub fn lmmse_update(
    matrix: &SensingMatrix,
    y: &DVector<f64>,
    x_pri: &DVector<f64>,
    var_pri: f64,
    sigma_n_sq: f64,
    solver: LmmseSolver,
) -> Result<LmmseUpdate> {
    let a = matrix.a();
    let residual = y - a * x_pri;
    let (u, trace) = match solver {
        LmmseSolver::Spectral => {
            let spec = matrix.spectrum();
            let mut t = spec.eigenvectors.tr_mul(&residual);
            let mut trace = 0.0;
            for (tj, &lj) in t.iter_mut().zip(spec.eigenvalues.iter()) {
                let d = var_pri * lj + sigma_n_sq;
                *tj /= d;
                trace += lj / d;
            }
            (&spec.eigenvectors * t, trace)
        }
        LmmseSolver::Cholesky => {
            let chol = system(matrix, var_pri, sigma_n_sq)?;
            let u = chol.solve(&residual);
            let z = chol
                .l()
                .solve_lower_triangular(a)
                .ok_or(Error::NotPositiveDefinite)?;
            (u, z.norm_squared())
        }
    };
    let mut x_post = x_pri.clone();
    x_post.gemv_tr(var_pri, a, &u, 1.0);
    Ok(LmmseUpdate {
        x_post,
        mean_k_diag: var_pri * trace / matrix.cols() as f64,
    })
}

/// Diagonal of the LMMSE cascade `K = σ²_pri Aᵀ (σ²_pri A Aᵀ + σ_n² I)⁻¹ A`.
pub fn k_diagonal(
    matrix: &SensingMatrix,
    var_pri: f64,
    sigma_n_sq: f64,
    solver: LmmseSolver,
) -> Result<DVector<f64>> {
    let a = matrix.a();
    match solver {
        LmmseSolver::Spectral => {
            let spec = matrix.spectrum();
            let b = spec.eigenvectors.tr_mul(a);
            let scale = spec.eigenvalues.map(|l| var_pri / (var_pri * l + sigma_n_sq));
            Ok(DVector::from_iterator(
                a.ncols(),
                b.column_iter()
                    .map(|col| col.iter().zip(scale.iter()).map(|(v, s)| v * v * s).sum()),
            ))
        }
        LmmseSolver::Cholesky => {
            let chol = system(matrix, var_pri, sigma_n_sq)?;
            let z = chol
                .l()
                .solve_lower_triangular(a)
                .ok_or(Error::NotPositiveDefinite)?;
            Ok(DVector::from_iterator(
                a.ncols(),
                z.column_iter().map(|col| var_pri * col.norm_squared()),
            ))
        }
    }
}

fn system(
    matrix: &SensingMatrix,
    var_pri: f64,
    sigma_n_sq: f64,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let k = matrix.rows();
    let m: DMatrix<f64> = matrix.gram() * var_pri + DMatrix::identity(k, k) * sigma_n_sq;
    m.cholesky().ok_or(Error::NotPositiveDefinite)
}
