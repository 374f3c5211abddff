//! Per-(month, community) feature vectors and the aligned train/test
//! matrices built from them.
//!
//! Layout for community `c` with neighbors `(a, b)` at month `i`: the crime
//! counts of `c`, `a` and `b` (one block of `|T|` each), then the triples
//! (police stations, library visitors, schools, 311 calls) for `c`, `a`, `b`.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::sig9;
use crate::ingest::{CommunityId, MonthlyCube};
use crate::similarity::TopKNeighbors;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("month index {month} outside cube span of {len} months")]
    MonthOutOfSpan { month: usize, len: usize },
    #[error("training span of {train} months is shorter than alignment {alignment} + 12")]
    SpanTooShort { train: usize, alignment: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

/// Feature dimension for `n_types` crime types.
pub fn feature_dim(n_types: usize) -> usize {
    3 * n_types + 12
}

/// Months (cube indices) used for training and testing, and the
/// feature-to-target lag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub test: Range<usize>,
    pub alignment: usize,
}

impl Split {
    pub fn validate(&self, n_months: usize) -> Result<(), FeatureError> {
        if self.alignment == 0 {
            return Err(FeatureError::InvalidSplit("alignment must be at least 1".into()));
        }
        if self.train.is_empty() || self.test.is_empty() {
            return Err(FeatureError::InvalidSplit("empty train or test range".into()));
        }
        if self.test.start < self.train.end {
            return Err(FeatureError::InvalidSplit("test range must follow the training range".into()));
        }
        if self.test.end > n_months {
            return Err(FeatureError::MonthOutOfSpan {
                month: self.test.end - 1,
                len: n_months,
            });
        }
        if self.train.len() < self.alignment + 12 {
            return Err(FeatureError::SpanTooShort {
                train: self.train.len(),
                alignment: self.alignment,
            });
        }
        if self.test.start < self.alignment {
            return Err(FeatureError::InvalidSplit("test targets have no feature month".into()));
        }
        Ok(())
    }

    /// Feature months of training rows; targets sit `alignment` months later.
    pub fn train_feature_months(&self) -> Range<usize> {
        self.train.start..self.train.end - self.alignment
    }

    /// Feature months of test rows.
    pub fn test_feature_months(&self) -> Range<usize> {
        self.test.start - self.alignment..self.test.end - self.alignment
    }
}

/// Raw feature vector of community `c` at month `i`.
pub fn build_feature_vector(
    cube: &MonthlyCube,
    month: usize,
    c: CommunityId,
    neighbors: &TopKNeighbors,
) -> Result<Vec<f64>, FeatureError> {
    let attachment = cube.police_attachment();
    feature_vector_with(cube, month, c, neighbors, &attachment)
}

fn feature_vector_with(
    cube: &MonthlyCube,
    month: usize,
    c: CommunityId,
    neighbors: &TopKNeighbors,
    attachment: &[Vec<usize>],
) -> Result<Vec<f64>, FeatureError> {
    if month >= cube.n_months() {
        return Err(FeatureError::MonthOutOfSpan {
            month,
            len: cube.n_months(),
        });
    }
    let (a, b) = neighbors.get(c);
    let trio = [c, a, b];
    let mut v = Vec::with_capacity(feature_dim(cube.n_types()));
    for &x in &trio {
        v.extend(cube.crime_vector(month, x).iter().map(|&k| k as f64));
    }
    v.extend(trio.iter().map(|x| attachment[x.index()].len() as f64));
    v.extend(trio.iter().map(|&x| cube.community_library_visits(month, x) as f64));
    v.extend(trio.iter().map(|&x| cube.school_count(x) as f64));
    v.extend(trio.iter().map(|&x| cube.community_service_calls(month, x) as f64));
    Ok(v)
}

/// Per-column min/max fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxParams {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let (min, max) = x
            .column_iter()
            .map(|col| (col.min(), col.max()))
            .unzip();
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, got: usize) -> Result<(), FeatureError> {
        if got == self.dim() {
            Ok(())
        } else {
            Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                got,
            })
        }
    }

    /// Inverse of [`apply_minmax`].
    pub fn invert(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        self.check(x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let (lo, hi) = (self.min[j], self.max[j]);
                if hi == lo {
                    lo
                } else {
                    v * (hi - lo) + lo
                }
            })
            .collect())
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, FeatureError> {
        self.check(x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            for v in col.iter_mut() {
                *v = scale(*v, lo, hi);
            }
        }
        Ok(out)
    }
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi == lo {
        1.0
    } else {
        (v - lo) / (hi - lo)
    }
}

/// Column-wise `(x − min)/(max − min)`; constant columns map to 1. Values
/// outside the fitted range are not clipped.
pub fn apply_minmax(x: &[f64], params: &MinMaxParams) -> Result<Vec<f64>, FeatureError> {
    params.check(x.len())?;
    Ok(x.iter()
        .enumerate()
        .map(|(j, &v)| scale(v, params.min[j], params.max[j]))
        .collect())
}

/// A sample: feature month index and community.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleKey {
    pub month: usize,
    pub community: CommunityId,
}

/// Normalized feature matrices shared by every crime type.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub split: Split,
    pub train_keys: Vec<SampleKey>,
    pub test_keys: Vec<SampleKey>,
    pub x_train: DMatrix<f64>,
    pub x_test: DMatrix<f64>,
    pub params: MinMaxParams,
}

fn keys(months: Range<usize>, n: usize) -> Vec<SampleKey> {
    months
        .flat_map(|month| CommunityId::all(n).map(move |community| SampleKey { month, community }))
        .collect()
}

fn raw_matrix(
    cube: &MonthlyCube,
    keys: &[SampleKey],
    neighbors: &TopKNeighbors,
    attachment: &[Vec<usize>],
) -> Result<DMatrix<f64>, FeatureError> {
    let dim = feature_dim(cube.n_types());
    let rows = keys
        .par_iter()
        .map(|k| feature_vector_with(cube, k.month, k.community, neighbors, attachment))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DMatrix::from_fn(keys.len(), dim, |i, j| rows[i][j]))
}

/// Builds and normalizes the train and test feature matrices. Rows are
/// month-major, then by community id.
pub fn build_features(
    cube: &MonthlyCube,
    neighbors: &TopKNeighbors,
    split: &Split,
) -> Result<FeatureBlock, FeatureError> {
    split.validate(cube.n_months())?;
    let n = cube.n_communities;
    let attachment = cube.police_attachment();
    let train_keys = keys(split.train_feature_months(), n);
    let test_keys = keys(split.test_feature_months(), n);
    let raw_train = raw_matrix(cube, &train_keys, neighbors, &attachment)?;
    let raw_test = raw_matrix(cube, &test_keys, neighbors, &attachment)?;
    let params = MinMaxParams::fit(&raw_train);
    Ok(FeatureBlock {
        split: split.clone(),
        x_train: params.apply_matrix(&raw_train)?,
        x_test: params.apply_matrix(&raw_test)?,
        train_keys,
        test_keys,
        params,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedDataset {
    pub crime_type: usize,
    pub train_keys: Vec<SampleKey>,
    pub test_keys: Vec<SampleKey>,
    pub x_train: DMatrix<f64>,
    pub y_train: DVector<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: DVector<f64>,
    pub params: MinMaxParams,
}

impl FeatureBlock {
    fn targets(&self, cube: &MonthlyCube, keys: &[SampleKey], t: usize) -> DVector<f64> {
        let lag = self.split.alignment;
        DVector::from_iterator(
            keys.len(),
            keys.iter()
                .map(|k| cube.crime_count(k.month + lag, k.community, t) as f64),
        )
    }

    /// Training targets of type `t`.
    pub fn train_targets(&self, cube: &MonthlyCube, t: usize) -> Vec<f64> {
        self.targets(cube, &self.train_keys, t).as_slice().to_vec()
    }

    /// Raw crime counts of type `t`, `alignment` months after each row.
    pub fn dataset(&self, cube: &MonthlyCube, t: usize) -> SupervisedDataset {
        SupervisedDataset {
            crime_type: t,
            train_keys: self.train_keys.clone(),
            test_keys: self.test_keys.clone(),
            x_train: self.x_train.clone(),
            y_train: self.targets(cube, &self.train_keys, t),
            x_test: self.x_test.clone(),
            y_test: self.targets(cube, &self.test_keys, t),
            params: self.params.clone(),
        }
    }
}

pub fn build_dataset(
    cube: &MonthlyCube,
    neighbors: &TopKNeighbors,
    t: usize,
    split: &Split,
) -> Result<SupervisedDataset, FeatureError> {
    Ok(build_features(cube, neighbors, split)?.dataset(cube, t))
}

/// Writes `month,community,y,f_0..f_{D-1}` rows, `month` being the feature
/// month as `YYYY-MM`.
pub fn write_dataset_csv<W: Write>(
    w: W,
    cube: &MonthlyCube,
    keys: &[SampleKey],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["month", "community", "y"].map(String::from).to_vec();
    header.extend((0..x.ncols()).map(|j| format!("f_{j}")));
    out.write_record(&header)?;
    for (i, k) in keys.iter().enumerate() {
        let mut row = vec![
            cube.span.month_at(k.month).to_string(),
            k.community.to_string(),
            sig9(y[i]),
        ];
        row.extend(x.row(i).iter().map(|&v| sig9(v)));
        out.write_record(&row)?;
    }
    out.flush()
}
