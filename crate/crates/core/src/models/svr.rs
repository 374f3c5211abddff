//! ε-support vector regression with an RBF kernel, trained by sequential
//! minimal optimization on the dual.
//!
//! The dual is solved in the `2N`-variable form
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  sᵀα = 0,  0 ≤ α ≤ C
//! ```
//!
//! where the first `N` variables carry sign `s = +1` and `p = ε − y`, the
//! last `N` carry `s = −1` and `p = ε + y`, and `Q_tu = s_t s_u K(x_t, x_u)`.
//! Each step updates the maximal KKT-violating pair analytically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelError;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    /// RBF width; `None` means `1 / D`.
    pub gamma: Option<f64>,
    /// Stopping threshold on the maximal KKT violation.
    pub tol: f64,
    /// Upper bound on pair updates.
    pub max_iter: u64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            gamma: None,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SvrParams {
    pub fn resolved_gamma(&self, dim: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / dim.max(1) as f64)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidHyperparameters(msg.to_string()));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("C must be positive");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be non-negative");
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad("gamma must be positive");
            }
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub dim: usize,
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    /// Support vectors, row-major, `dim` values each.
    pub support: Vec<f64>,
    /// `α − α*` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Dual objective `yᵀβ − ε‖β‖₁ − ½βᵀKβ` at the solution.
    pub objective: f64,
    pub iterations: u64,
    pub converged: bool,
}

impl SvrModel {
    pub fn n_support(&self) -> usize {
        self.dual_coef.len()
    }

    pub fn support_vector(&self, k: usize) -> &[f64] {
        &self.support[k * self.dim..(k + 1) * self.dim]
    }
}

fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(−γ‖x − z‖²)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64, ModelError> {
    if x.len() != z.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok((-gamma * sq_dist(x, z)).exp())
}

/// Dense RBF Gram matrix between the rows of `a` and the rows of `b`.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let rows_a: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rows_b: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        (-gamma * sq_dist(&rows_a[i], &rows_b[j])).exp()
    })
}

/// Fits on `x` (one sample per row). Builds the Gram matrix and calls
/// [`fit_svr_with_kernel`].
pub fn fit_svr(x: &DMatrix<f64>, y: &[f64], params: &SvrParams) -> Result<SvrModel, ModelError> {
    params.validate()?;
    let gamma = params.resolved_gamma(x.ncols());
    let k = kernel_matrix(x, x, gamma);
    fit_svr_with_kernel(x, &k, y, params)
}

/// Fits with a precomputed Gram matrix `k` of `x`, so several target
/// vectors can share one kernel.
pub fn fit_svr_with_kernel(
    x: &DMatrix<f64>,
    k: &DMatrix<f64>,
    y: &[f64],
    params: &SvrParams,
) -> Result<SvrModel, ModelError> {
    params.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(ModelError::DimensionMismatch { expected: n, got: y.len() });
    }
    if k.shape() != (n, n) {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            got: k.nrows(),
        });
    }
    let sol = solve(k, y, params);
    let gamma = params.resolved_gamma(x.ncols());
    let mut support = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, &b) in sol.beta.iter().enumerate() {
        if b != 0.0 {
            support.extend(x.row(i).iter().copied());
            dual_coef.push(b);
        }
    }
    Ok(SvrModel {
        dim: x.ncols(),
        gamma,
        c: params.c,
        epsilon: params.epsilon,
        support,
        dual_coef,
        bias: -sol.rho,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

pub fn predict_svr(model: &SvrModel, x: &[f64]) -> Result<f64, ModelError> {
    if x.len() != model.dim {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    let mut f = model.bias;
    for (k, &b) in model.dual_coef.iter().enumerate() {
        f += b * (-model.gamma * sq_dist(model.support_vector(k), x)).exp();
    }
    Ok(f)
}

struct Solution {
    /// `α_i − α*_i` per training sample.
    beta: Vec<f64>,
    rho: f64,
    objective: f64,
    iterations: u64,
    converged: bool,
}

fn solve(k: &DMatrix<f64>, y: &[f64], params: &SvrParams) -> Solution {
    let n = y.len();
    let l = 2 * n;
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|t| if t < n { params.epsilon - y[t] } else { params.epsilon + y[t - n] })
        .collect();
    let mut alpha = vec![0.0; l];
    let mut grad = p.clone();
    let q = |t: usize, u: usize| sign(t) * sign(u) * k[(t % n, u % n)];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let Some((i, j)) = select_pair(&alpha, &grad, n, c, params.tol) else {
            converged = true;
            break;
        };
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if sign(i) != sign(j) {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (si, sj) = (sign(i), sign(j));
        let (ci, cj) = (k.column(i % n), k.column(j % n));
        for (t, g) in grad.iter_mut().enumerate() {
            let st = sign(t);
            *g += st * (si * ci[t % n] * di + sj * cj[t % n] * dj);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} pair updates without reaching tol {}", params.tol);
    }

    let objective = -0.5 * alpha.iter().zip(grad.iter().zip(&p)).map(|(a, (g, pt))| a * (g + pt)).sum::<f64>();
    let beta = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    Solution {
        beta,
        rho: compute_rho(&alpha, &grad, n, c),
        objective,
        iterations,
        converged,
    }
}

/// Maximal violating pair `(i, j)`, or `None` once the violation is below
/// `tol`. Ties go to the lowest index.
fn select_pair(alpha: &[f64], grad: &[f64], n: usize, c: f64, tol: f64) -> Option<(usize, usize)> {
    let mut gmax = f64::NEG_INFINITY;
    let mut gmax2 = f64::NEG_INFINITY;
    let (mut i, mut j) = (usize::MAX, usize::MAX);
    for t in 0..alpha.len() {
        let positive = t < n;
        // t ∈ I_up: can move along +s_t
        let up = if positive { alpha[t] < c } else { alpha[t] > 0.0 };
        let low = if positive { alpha[t] > 0.0 } else { alpha[t] < c };
        let sg = if positive { -grad[t] } else { grad[t] };
        if up && sg > gmax {
            gmax = sg;
            i = t;
        }
        if low && -sg > gmax2 {
            gmax2 = -sg;
            j = t;
        }
    }
    if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tol {
        None
    } else {
        Some((i, j))
    }
}

/// Offset `ρ` of the decision function `Σ β K − ρ`: the mean of `s_t G_t`
/// over free variables, or the midpoint of the feasible interval when none
/// is free.
fn compute_rho(alpha: &[f64], grad: &[f64], n: usize, c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let s = if t < n { 1.0 } else { -1.0 };
        let yg = s * grad[t];
        if alpha[t] >= c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// The dual objective `yᵀβ − ε‖β‖₁ − ½βᵀKβ` for coefficients `beta`.
pub fn dual_objective(k: &DMatrix<f64>, y: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[(i, j)];
        }
    }
    let lin: f64 = y.iter().zip(beta).map(|(a, b)| a * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    lin - epsilon * l1 - 0.5 * quad
}
