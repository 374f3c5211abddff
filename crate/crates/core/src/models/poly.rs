//! Degree-2 polynomial regression with per-coordinate squares and no cross
//! terms, fitted by minimum-norm least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::linalg::lstsq_min_norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRegModel {
    /// Input dimension `D`.
    pub dim: usize,
    /// `a_0..a_{2D}` in the order of [`expand_quadratic`].
    pub coefficients: Vec<f64>,
}

/// `[1, x_1, x_1², …, x_D, x_D²]`.
pub fn expand_quadratic(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() + 1);
    out.push(1.0);
    for &v in x {
        out.push(v);
        out.push(v * v);
    }
    out
}

pub fn design_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.ncols();
    DMatrix::from_fn(x.nrows(), 2 * d + 1, |i, k| match k {
        0 => 1.0,
        k if k % 2 == 1 => x[(i, (k - 1) / 2)],
        k => x[(i, (k - 1) / 2)].powi(2),
    })
}

pub fn fit_polyreg(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<PolyRegModel, ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let a = lstsq_min_norm(&design_matrix(x), y)?;
    Ok(PolyRegModel {
        dim: x.ncols(),
        coefficients: a.iter().copied().collect(),
    })
}

pub fn predict_polyreg(model: &PolyRegModel, x: &[f64]) -> Result<f64, ModelError> {
    if x.len() != model.dim {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    Ok(expand_quadratic(x)
        .iter()
        .zip(&model.coefficients)
        .map(|(p, a)| p * a)
        .sum())
}
