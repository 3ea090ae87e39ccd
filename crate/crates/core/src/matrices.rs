//! Measurement-matrix ensembles.
//!
//! Both ensembles have unit-norm columns. The partial-orthogonal ensemble
//! also keeps its factorization `A = U·diag(c)`, which the approximate
//! linear stage of TSR needs.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Random rows of a Haar orthogonal matrix, columns rescaled.
    PartialOrthogonal,
    /// Any dense matrix; the generator draws i.i.d. Gaussians.
    GeneralDense,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::PartialOrthogonal => "partial_orthogonal",
            MatrixKind::GeneralDense => "general_dense",
        })
    }
}

impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial_orthogonal" | "ortho" => Ok(MatrixKind::PartialOrthogonal),
            "general_dense" | "gauss" => Ok(MatrixKind::GeneralDense),
            other => Err(Error::InvalidConfig(format!("unknown matrix kind {other:?}"))),
        }
    }
}

/// Factorization `A = U·diag(c)` with orthonormal rows in `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalFactor {
    pub u: DMatrix<f64>,
    pub c: DVector<f64>,
    pub c_bar_sq: f64,
}

/// Eigendecomposition of the Gram matrix `A Aᵀ`.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    /// Eigenvalues, clipped at zero.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SensingMatrix {
    kind: MatrixKind,
    a: DMatrix<f64>,
    factor: Option<OrthogonalFactor>,
    gram: OnceLock<DMatrix<f64>>,
    spectrum: OnceLock<GramSpectrum>,
}

impl PartialEq for SensingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.a == other.a && self.factor == other.factor
    }
}

impl SensingMatrix {
    pub fn generate<R: Rng + ?Sized>(
        rng: &mut R,
        kind: MatrixKind,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        match kind {
            MatrixKind::PartialOrthogonal => Self::partial_orthogonal(rng, rows, cols),
            MatrixKind::GeneralDense => Self::gaussian_normalized(rng, rows, cols),
        }
    }

    /// `K` rows of an `L×L` Haar orthogonal matrix with columns rescaled to
    /// unit norm.
    ///
    /// The rows are produced directly as the transposed Q factor of an `L×K`
    /// Gaussian matrix with the sign of `diag(R)` fixed to be positive. That
    /// is the first `K` columns of a Haar matrix; transposition and row
    /// selection both preserve Haar measure, so this has the same law as
    /// selecting `K` random rows of a full Haar draw at a quarter of the cost.
    pub fn partial_orthogonal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || rows > cols {
            return Err(Error::InvalidConfig(format!(
                "partial-orthogonal matrix needs 1 <= K <= L, got K = {rows}, L = {cols}"
            )));
        }
        let g = DMatrix::from_fn(cols, rows, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r_diag = qr.r().diagonal();
        let mut q = qr.q();
        for (j, mut column) in q.column_iter_mut().enumerate() {
            if r_diag[j] < 0.0 {
                column.neg_mut();
            }
        }
        Self::from_orthonormal_rows(q.transpose())
    }

    /// Builds the factored form from any `U` with orthonormal rows.
    pub fn from_orthonormal_rows(u: DMatrix<f64>) -> Result<Self> {
        let c = DVector::from_iterator(
            u.ncols(),
            u.column_iter().map(|col| 1.0 / col.norm_squared().sqrt()),
        );
        if c.iter().any(|ci| !ci.is_finite()) {
            return Err(Error::InvalidConfig("U has a zero column".into()));
        }
        let c_bar_sq = c.iter().map(|ci| ci * ci).sum::<f64>() / c.len() as f64;
        let mut a = u.clone();
        for (j, mut column) in a.column_iter_mut().enumerate() {
            column *= c[j];
        }
        Ok(SensingMatrix {
            kind: MatrixKind::PartialOrthogonal,
            a,
            factor: Some(OrthogonalFactor { u, c, c_bar_sq }),
            gram: OnceLock::new(),
            spectrum: OnceLock::new(),
        })
    }

    /// I.i.d. `N(0,1)` entries, each column scaled to unit norm.
    pub fn gaussian_normalized<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::from_dense(a)
    }

    /// Wraps a dense matrix after normalizing its columns.
    pub fn from_dense(mut a: DMatrix<f64>) -> Result<Self> {
        for mut column in a.column_iter_mut() {
            let norm = column.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::InvalidConfig(
                    "matrix column is zero or non-finite".into(),
                ));
            }
            column /= norm;
        }
        Ok(SensingMatrix {
            kind: MatrixKind::GeneralDense,
            a,
            factor: None,
            gram: OnceLock::new(),
            spectrum: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn factor(&self) -> Option<&OrthogonalFactor> {
        self.factor.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// Average squared column scaling `c̄²`; exactly one without a factor
    /// because columns are unit norm.
    pub fn c_bar_sq(&self) -> f64 {
        self.factor.as_ref().map_or(1.0, |f| f.c_bar_sq)
    }

    /// `A Aᵀ`, computed once.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| &self.a * self.a.transpose())
    }

    /// Eigendecomposition of `A Aᵀ`, computed once.
    pub fn spectrum(&self) -> &GramSpectrum {
        self.spectrum.get_or_init(|| {
            let eig = SymmetricEigen::new(self.gram().clone());
            GramSpectrum {
                eigenvalues: eig.eigenvalues.map(|l| l.max(0.0)),
                eigenvectors: eig.eigenvectors,
            }
        })
    }

    /// Writes a plain-text, row-major dump that [`SensingMatrix::read_text`]
    /// restores bit-exactly.
    pub fn write_text<W: Write>(&self, mut out: W, seed: Option<u64>) -> std::io::Result<()> {
        writeln!(out, "turbocs-matrix v1")?;
        let seed = seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        writeln!(out, "{} {} {} {}", self.rows(), self.cols(), self.kind, seed)?;
        let source = match &self.factor {
            Some(f) => &f.u,
            None => &self.a,
        };
        for row in source.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`SensingMatrix::write_text`]. Returns the
    /// matrix and the recorded seed, if any.
    pub fn read_text<R: BufRead>(input: R) -> Result<(Self, Option<u64>)> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of file".into()))?
                .map_err(|e| Error::Format(e.to_string()))
        };
        if next()?.trim() != "turbocs-matrix v1" {
            return Err(Error::Format("missing header".into()));
        }
        let header = next()?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!("bad dimension line {header:?}")));
        }
        let parse_dim = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(e.to_string()));
        let (rows, cols) = (parse_dim(fields[0])?, parse_dim(fields[1])?);
        let kind: MatrixKind = fields[2].parse()?;
        let seed = match fields[3] {
            "-" => None,
            s => Some(s.parse::<u64>().map_err(|e| Error::Format(e.to_string()))?),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = next()?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|e| Error::Format(e.to_string()))?);
            }
            if data.len() - before != cols {
                return Err(Error::Format(format!("expected {cols} entries per row")));
            }
        }
        let source = DMatrix::from_row_slice(rows, cols, &data);
        let matrix = match kind {
            MatrixKind::PartialOrthogonal => Self::from_orthonormal_rows(source)?,
            MatrixKind::GeneralDense => SensingMatrix {
                kind,
                a: source,
                factor: None,
                gram: OnceLock::new(),
                spectrum: OnceLock::new(),
            },
        };
        Ok((matrix, seed))
    }
}
