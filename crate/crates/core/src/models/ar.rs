//! Auto-regression `y_i = c + Σ_k φ_k y_{i−δk}` with `δ = 1` (monthly) or
//! `δ = 12` (annual), fitted by minimum-norm least squares.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::linalg::lstsq_min_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagMode {
    #[default]
    Monthly,
    Annual,
}

impl LagMode {
    pub fn stride(self) -> usize {
        match self {
            LagMode::Monthly => 1,
            LagMode::Annual => 12,
        }
    }

    /// Shortest series `fit_ar` accepts.
    pub fn min_series_len(self, lag: usize) -> usize {
        match self {
            LagMode::Monthly => lag + 1,
            LagMode::Annual => 12 * lag + 12,
        }
    }
}

impl fmt::Display for LagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LagMode::Monthly => "monthly",
            LagMode::Annual => "annual",
        })
    }
}

impl FromStr for LagMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monthly" => Ok(LagMode::Monthly),
            "annual" => Ok(LagMode::Annual),
            other => Err(format!("unknown lag mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub lag: usize,
    pub mode: LagMode,
    pub intercept: f64,
    /// `φ_1..φ_lag`.
    pub phi: Vec<f64>,
}

impl ArModel {
    fn step(&self, history: &[f64]) -> f64 {
        let d = self.mode.stride();
        let n = history.len();
        self.intercept
            + self
                .phi
                .iter()
                .enumerate()
                .map(|(k, p)| p * history[n - d * (k + 1)])
                .sum::<f64>()
    }
}

pub fn fit_ar(series: &[f64], lag: usize, mode: LagMode) -> Result<ArModel, ModelError> {
    fit_ar_pooled(&[series], lag, mode)
}

/// One model shared by several series: the regression rows of every series
/// are stacked.
pub fn fit_ar_pooled<S: AsRef<[f64]>>(
    series: &[S],
    lag: usize,
    mode: LagMode,
) -> Result<ArModel, ModelError> {
    if lag == 0 {
        return Err(ModelError::InvalidHyperparameters("AR lag must be at least 1".into()));
    }
    let need = mode.min_series_len(lag);
    let d = mode.stride();
    if series.is_empty() {
        return Err(ModelError::SeriesTooShort { len: 0, need });
    }
    if let Some(s) = series.iter().find(|s| s.as_ref().len() < need) {
        return Err(ModelError::SeriesTooShort {
            len: s.as_ref().len(),
            need,
        });
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for s in series {
        let s = s.as_ref();
        for i in d * lag..s.len() {
            rows.push(1.0);
            rows.extend((1..=lag).map(|k| s[i - d * k]));
            targets.push(s[i]);
        }
    }
    let a = DMatrix::from_row_slice(targets.len(), lag + 1, &rows);
    let coef = lstsq_min_norm(&a, &DVector::from_vec(targets))?;
    Ok(ArModel {
        lag,
        mode,
        intercept: coef[0],
        phi: coef.iter().skip(1).copied().collect(),
    })
}

/// Recursive forecast: each prediction is appended to the history before
/// the next one.
pub fn forecast_ar(model: &ArModel, history: &[f64], horizon: usize) -> Result<Vec<f64>, ModelError> {
    let need = model.mode.stride() * model.lag;
    if history.len() < need {
        return Err(ModelError::HistoryTooShort {
            len: history.len(),
            need,
        });
    }
    let mut h = history.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = model.step(&h);
        h.push(next);
        out.push(next);
    }
    Ok(out)
}
