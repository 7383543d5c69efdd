//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}

pub fn require_square(rows: usize, cols: usize) -> Result<()> {
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    Ok(())
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenvalue of a real symmetric matrix (`+inf` when empty).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Spectral norm of a real symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .iter()
        .fold(0.0, |acc: f64, &x| acc.max(x.abs()))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// Uses the real embedding `[[Re, -Im], [Im, Re]]`, whose spectrum is the
/// Hermitian spectrum with every eigenvalue doubled.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let k = m.nrows();
    let embed = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let z = m[(i % k, j % k)];
        match (i < k, j < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    symmetric_eigenvalues(&embed).into_iter().step_by(2).collect()
}

/// `(M + M†) / 2` together with `max |M - M†|`.
pub fn hermitize(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, f64) {
    let adjoint = m.adjoint();
    let defect = (m - &adjoint).iter().fold(0.0, |acc: f64, z| acc.max(z.norm()));
    ((m + adjoint).scale(0.5), defect)
}

/// Symmetric square root factor `F` with `F Fᵀ = C`, built from the
/// eigendecomposition with eigenvalues in `[-threshold, 0)` clipped to zero.
///
/// Rank-deficient input is fine; eigenvalues below `-threshold` are an error.
pub fn psd_factor(c: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -threshold {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            threshold,
        });
    }
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}
