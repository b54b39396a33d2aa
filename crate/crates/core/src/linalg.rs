//! Symmetric-matrix helpers: pseudoinverses, null spaces, matrix powers and
//! the range test behind estimability.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix together with the rank cutoff
/// `τ = n · ε · λ_max` used for every rank decision in the crate.
#[derive(Debug, Clone)]
pub struct SymDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub tolerance: f64,
}

impl SymDecomposition {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let eig = SymmetricEigen::new(symmetrize(m));
        let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let tolerance = n as f64 * f64::EPSILON * max_abs;
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
            tolerance,
        }
    }

    pub fn rank(&self) -> usize {
        self.values.iter().filter(|v| **v > self.tolerance).count()
    }

    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (j, &lambda) in self.values.iter().enumerate() {
            if lambda > self.tolerance {
                let v = self.vectors.column(j);
                out += (v * v.transpose()) / lambda;
            }
        }
        symmetrize(&out)
    }

    /// Orthonormal basis of the eigenspace treated as zero (n × (n − rank)).
    pub fn null_space(&self) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let cols: Vec<usize> = (0..self.values.len())
            .filter(|&j| self.values[j] <= self.tolerance)
            .collect();
        let mut out = DMatrix::zeros(n, cols.len());
        for (k, &j) in cols.iter().enumerate() {
            out.set_column(k, &self.vectors.column(j));
        }
        out
    }

    /// `A^power` for a positive definite matrix; eigenvalues are clamped at
    /// the rank tolerance so callers get a finite answer on the boundary.
    pub fn power(&self, power: f64) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (j, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.column(j);
            out += (v * v.transpose()) * lambda.max(self.tolerance).powf(power);
        }
        symmetrize(&out)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Moore-Penrose pseudoinverse of a symmetric matrix.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    SymDecomposition::new(m).pseudo_inverse()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// `true` iff every column of `k` lies in the range of the symmetric matrix
/// `m`, i.e. `‖(I − M M⁺) K‖_max ≤ 1e−8 · (1 + ‖K‖_max)`.
pub fn in_range(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<bool> {
    if k.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: k.nrows(),
        });
    }
    let pinv = pseudo_inverse(m);
    let projected = m * (&pinv * k);
    let residual = max_abs(&(k - projected));
    Ok(residual <= 1e-8 * (1.0 + max_abs(k)))
}

/// Numerical rank of a general matrix from its singular values.
pub fn column_rank(k: &DMatrix<f64>) -> usize {
    let svd = k.clone().svd(false, false);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, v| a.max(*v));
    let tol = k.nrows().max(k.ncols()) as f64 * f64::EPSILON * smax;
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

/// Block-diagonal assembly of two matrices.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}
