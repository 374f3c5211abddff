//! Dense kernels: Moore-Penrose pseudoinverse of symmetric matrices and
//! minimum-norm least squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Default relative eigenvalue cutoff for [`pseudo_inverse`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

fn check_symmetric(s: &DMatrix<f64>) -> Result<(), LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare(s.nrows(), s.ncols()));
    }
    let scale = s.amax().max(1.0);
    let mut worst = 0.0f64;
    for j in 0..s.ncols() {
        for i in 0..j {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if worst > 1e-12 * scale {
        Err(LinalgError::NotSymmetric(worst))
    } else {
        Ok(())
    }
}

/// Pseudoinverse of a symmetric matrix through its eigendecomposition.
///
/// Eigenvalues with `|λ| <= rank_tol * max|λ|` are treated as zero. The
/// result is exactly symmetric.
pub fn pseudo_inverse(s: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>, LinalgError> {
    check_symmetric(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // average the two triangles so tiny asymmetries do not bias the solver
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.amax();
    if lmax == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let cutoff = rank_tol * lmax;
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let inv = if lambda.abs() <= cutoff { 0.0 } else { 1.0 / lambda };
        scaled.column_mut(k).scale_mut(inv);
    }
    let mut out = scaled * v.transpose();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

/// Minimum-norm solution of `min ‖A x − b‖₂` via a thin SVD.
///
/// Singular values at or below `max(rows, cols) · ε · σ_max` are dropped,
/// so exactly collinear columns share weight instead of blowing up.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    if a.nrows() != b.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{} rows vs {} targets",
            a.nrows(),
            b.len()
        )));
    }
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = m.thin_svd().map_err(|_| LinalgError::NoConvergence)?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let smax = (0..s.nrows()).map(|k| s[k].abs()).fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    let mut x = DVector::zeros(a.ncols());
    for k in 0..s.nrows() {
        if s[k] <= tol {
            continue;
        }
        let proj: f64 = (0..a.nrows()).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s[k];
        for j in 0..a.ncols() {
            x[j] += v[(j, k)] * proj;
        }
    }
    Ok(x)
}
