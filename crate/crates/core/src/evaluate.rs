//! Per-crime-type RMSE, box-plot statistics and the full vs only-crime
//! comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::sig9;
use crate::ingest::CommunityId;
use crate::models::ModelKind;
use crate::month::YearMonth;
use crate::netfuse::Variant;

/// Number of most frequent types kept in the top-type grouping.
pub const TOP_TYPES: usize = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("crime type `{0}` has no crimes in the test span")]
    ZeroCrimeType(String),
    #[error("no values to summarize")]
    EmptyInput,
    #[error("reports disagree on key {0}")]
    KeyMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseConvention {
    /// Squared errors divided by the test-span crime total of the type.
    #[default]
    Paper,
    /// Squared errors divided by the number of cells.
    Cells,
}

impl fmt::Display for RmseConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RmseConvention::Paper => "paper",
            RmseConvention::Cells => "cells",
        })
    }
}

impl FromStr for RmseConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(RmseConvention::Paper),
            "cells" => Ok(RmseConvention::Cells),
            other => Err(format!("unknown RMSE convention `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEntry {
    /// Target month.
    pub month: YearMonth,
    pub community: CommunityId,
    pub crime_type: usize,
    pub actual: f64,
    pub predicted: f64,
    pub model: ModelKind,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub type_labels: Vec<String>,
    pub entries: Vec<PredictionEntry>,
}

impl PredictionSet {
    /// Replaces negative predictions by zero.
    pub fn clamp_nonnegative(&mut self) {
        for e in &mut self.entries {
            e.predicted = e.predicted.max(0.0);
        }
    }

    /// Rows `month,community,type,model,variant,actual,predicted`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["month", "community", "type", "model", "variant", "actual", "predicted"])?;
        for e in &self.entries {
            out.write_record([
                e.month.to_string(),
                e.community.to_string(),
                self.type_labels[e.crime_type].clone(),
                e.model.to_string(),
                e.variant.to_string(),
                sig9(e.actual),
                sig9(e.predicted),
            ])?;
        }
        out.flush()
    }
}

/// RMSE over `(actual, predicted)` cells of one crime type.
pub fn rmse(cells: &[(f64, f64)], convention: RmseConvention) -> Option<f64> {
    let sse: f64 = cells.iter().map(|(a, p)| (a - p) * (a - p)).sum();
    let denom = match convention {
        RmseConvention::Paper => cells.iter().map(|c| c.0).sum::<f64>(),
        RmseConvention::Cells => cells.len() as f64,
    };
    (denom > 0.0).then(|| (sse / denom).sqrt())
}

/// RMSE of type `t` over the entries of one model and variant.
pub fn rmse_per_type(
    preds: &PredictionSet,
    t: usize,
    convention: RmseConvention,
) -> Result<f64, EvalError> {
    let cells: Vec<(f64, f64)> = preds
        .entries
        .iter()
        .filter(|e| e.crime_type == t)
        .map(|e| (e.actual, e.predicted))
        .collect();
    let label = || {
        preds
            .type_labels
            .get(t)
            .cloned()
            .unwrap_or_else(|| t.to_string())
    };
    if convention == RmseConvention::Paper && cells.iter().map(|c| c.0).sum::<f64>() <= 0.0 {
        return Err(EvalError::ZeroCrimeType(label()));
    }
    rmse(&cells, convention).ok_or_else(|| EvalError::ZeroCrimeType(label()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data at fractional rank `p·(n − 1)`, interpolating
/// linearly between neighbors.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `None` when the type has no test-span crimes.
    pub rmse: Option<f64>,
    /// Summary of the per-cell absolute errors.
    pub errors: BoxStats,
}

/// RMSE and error box statistics per (crime type, model) for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub variant: Variant,
    pub convention: RmseConvention,
    pub type_labels: Vec<String>,
    /// Test-span crime totals per type.
    pub totals: Vec<f64>,
    pub rows: BTreeMap<(usize, ModelKind), ReportRow>,
}

impl RmseReport {
    /// Builds the report for `variant` from every matching entry.
    pub fn from_predictions(
        preds: &PredictionSet,
        variant: Variant,
        convention: RmseConvention,
    ) -> Self {
        let mut cells: BTreeMap<(usize, ModelKind), Vec<(f64, f64)>> = BTreeMap::new();
        for e in preds.entries.iter().filter(|e| e.variant == variant) {
            cells
                .entry((e.crime_type, e.model))
                .or_default()
                .push((e.actual, e.predicted));
        }
        let mut totals = vec![0.0; preds.type_labels.len()];
        if let Some(&model) = cells.keys().map(|(_, m)| m).next() {
            for ((t, m), c) in &cells {
                if *m == model {
                    totals[*t] = c.iter().map(|x| x.0).sum();
                }
            }
        }
        let rows = cells
            .into_iter()
            .map(|(key, c)| {
                let abs: Vec<f64> = c.iter().map(|(a, p)| (a - p).abs()).collect();
                let row = ReportRow {
                    rmse: rmse(&c, convention),
                    errors: box_stats(&abs).expect("non-empty group"),
                };
                (key, row)
            })
            .collect();
        Self {
            variant,
            convention,
            type_labels: preds.type_labels.clone(),
            totals,
            rows,
        }
    }

    /// Rows `type,model,variant,rmse`; undefined values are written `NA`.
    pub fn write_rmse_csv<W: Write>(&self, out: &mut csv::Writer<W>) -> std::io::Result<()> {
        for ((t, m), row) in &self.rows {
            out.write_record([
                self.type_labels[*t].clone(),
                m.to_string(),
                self.variant.to_string(),
                row.rmse.map(sig9).unwrap_or_else(|| "NA".into()),
            ])?;
        }
        Ok(())
    }

    /// Rows `type,model,variant,min,q1,median,q3,max`.
    pub fn write_boxstats_csv<W: Write>(&self, out: &mut csv::Writer<W>) -> std::io::Result<()> {
        for ((t, m), row) in &self.rows {
            let b = row.errors;
            out.write_record([
                self.type_labels[*t].clone(),
                m.to_string(),
                self.variant.to_string(),
                sig9(b.min),
                sig9(b.q1),
                sig9(b.median),
                sig9(b.q3),
                sig9(b.max),
            ])?;
        }
        Ok(())
    }
}

pub const RMSE_HEADER: [&str; 4] = ["type", "model", "variant", "rmse"];
pub const BOXSTATS_HEADER: [&str; 8] = ["type", "model", "variant", "min", "q1", "median", "q3", "max"];

/// Indices of the `k` types with the largest totals; ties go to the lower
/// index. Types with a zero total are never selected.
pub fn top_types(totals: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..totals.len()).filter(|&t| totals[t] > 0.0).collect();
    idx.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub crime_type: usize,
    pub model: ModelKind,
    pub first: Option<f64>,
    pub second: Option<f64>,
    /// `first − second`.
    pub delta: Option<f64>,
    /// `delta / second`.
    pub relative: Option<f64>,
    pub winner: Option<Winner>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub first: Variant,
    pub second: Variant,
    pub type_labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Per model: number of types where the first variant wins, and number of
    /// types with both values defined.
    pub fn wins(&self) -> BTreeMap<ModelKind, (usize, usize)> {
        let mut out: BTreeMap<ModelKind, (usize, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = out.entry(r.model).or_default();
            if r.delta.is_some() {
                e.1 += 1;
            }
            if r.winner == Some(Winner::First) {
                e.0 += 1;
            }
        }
        out
    }

    pub fn restricted_to(&self, types: &[usize]) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .filter(|r| types.contains(&r.crime_type))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Rows `type,model,<first>,<second>,delta,relative,winner`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "type",
            "model",
            self.first.name(),
            self.second.name(),
            "delta",
            "relative",
            "winner",
        ])?;
        let num = |x: Option<f64>| x.map(sig9).unwrap_or_else(|| "NA".into());
        for r in &self.rows {
            let winner = match r.winner {
                Some(Winner::First) => self.first.name(),
                Some(Winner::Second) => self.second.name(),
                None => "none",
            };
            out.write_record([
                self.type_labels[r.crime_type].clone(),
                r.model.to_string(),
                num(r.first),
                num(r.second),
                num(r.delta),
                num(r.relative),
                winner.to_string(),
            ])?;
        }
        out.flush()
    }
}

/// Compares two reports key by key. Both must cover the same
/// (type, model) keys.
pub fn compare_variants(first: &RmseReport, second: &RmseReport) -> Result<Comparison, EvalError> {
    let key_name = |(t, m): &(usize, ModelKind)| {
        format!(
            "({}, {m})",
            first.type_labels.get(*t).cloned().unwrap_or_else(|| t.to_string())
        )
    };
    if let Some(k) = first.rows.keys().find(|k| !second.rows.contains_key(k)) {
        return Err(EvalError::KeyMismatch(key_name(k)));
    }
    if let Some(k) = second.rows.keys().find(|k| !first.rows.contains_key(k)) {
        return Err(EvalError::KeyMismatch(key_name(k)));
    }
    let rows = first
        .rows
        .iter()
        .map(|(&(t, model), a)| {
            let (x, y) = (a.rmse, second.rows[&(t, model)].rmse);
            let delta = x.zip(y).map(|(x, y)| x - y);
            let relative = y.zip(delta).and_then(|(y, d)| (y != 0.0).then(|| d / y));
            let winner = delta.and_then(|d| {
                if d < 0.0 {
                    Some(Winner::First)
                } else if d > 0.0 {
                    Some(Winner::Second)
                } else {
                    None
                }
            });
            ComparisonRow {
                crime_type: t,
                model,
                first: x,
                second: y,
                delta,
                relative,
                winner,
            }
        })
        .collect();
    Ok(Comparison {
        first: first.variant,
        second: second.variant,
        type_labels: first.type_labels.clone(),
        rows,
    })
}
