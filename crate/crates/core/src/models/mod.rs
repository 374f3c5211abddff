//! Regression engines: quadratic polynomial regression, ε-SVR with an RBF
//! kernel, and the lag-2 auto-regressive baseline.

mod ar;
mod poly;
mod svr;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

pub use ar::{fit_ar, fit_ar_pooled, forecast_ar, ArModel, LagMode};
pub use poly::{design_matrix, expand_quadratic, fit_polyreg, predict_polyreg, PolyRegModel};
pub use svr::{
    dual_objective, fit_svr, fit_svr_with_kernel, kernel_matrix, predict_svr, rbf_kernel, SvrModel,
    SvrParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("series of length {len} is too short, need {need}")]
    SeriesTooShort { len: usize, need: usize },
    #[error("history of length {len} is too short, need {need}")]
    HistoryTooShort { len: usize, need: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("model file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "polyreg")]
    PolyReg,
    Svr,
    Ar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::PolyReg, ModelKind::Svr, ModelKind::Ar];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PolyReg => "polyreg",
            ModelKind::Svr => "svr",
            ModelKind::Ar => "ar",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "polyreg" => Ok(ModelKind::PolyReg),
            "svr" => Ok(ModelKind::Svr),
            "ar" => Ok(ModelKind::Ar),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    #[serde(rename = "polyreg")]
    PolyReg(PolyRegModel),
    Svr(SvrModel),
    Ar(ArModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::PolyReg(_) => ModelKind::PolyReg,
            TrainedModel::Svr(_) => ModelKind::Svr,
            TrainedModel::Ar(_) => ModelKind::Ar,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let io = |message: String| ModelError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        Self::from_json(&text).map_err(|e| io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(30, 3, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..20.0)).collect();
        let models = [
            TrainedModel::PolyReg(fit_polyreg(&x, &DVector::from_vec(y.clone())).unwrap()),
            TrainedModel::Svr(fit_svr(&x, &y, &SvrParams::default()).unwrap()),
            TrainedModel::Ar(fit_ar(&y, 2, LagMode::Monthly).unwrap()),
        ];
        let dir = tempfile::tempdir().unwrap();
        for m in models {
            let path = dir.path().join(format!("{}.json", m.kind()));
            m.save(&path).unwrap();
            let back = TrainedModel::load(&path).unwrap();
            assert_eq!(back, m);
            let probe = [0.123456789, 0.987654321, 0.5];
            match (&m, &back) {
                (TrainedModel::PolyReg(a), TrainedModel::PolyReg(b)) => assert_eq!(
                    predict_polyreg(a, &probe).unwrap().to_bits(),
                    predict_polyreg(b, &probe).unwrap().to_bits()
                ),
                (TrainedModel::Svr(a), TrainedModel::Svr(b)) => assert_eq!(
                    predict_svr(a, &probe).unwrap().to_bits(),
                    predict_svr(b, &probe).unwrap().to_bits()
                ),
                (TrainedModel::Ar(a), TrainedModel::Ar(b)) => assert_eq!(
                    forecast_ar(a, &y, 3).unwrap(),
                    forecast_ar(b, &y, 3).unwrap()
                ),
                _ => unreachable!(),
            }
        }
        assert!(TrainedModel::load(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn json_is_self_describing() {
        let m = TrainedModel::Ar(ArModel {
            lag: 2,
            mode: LagMode::Annual,
            intercept: 0.5,
            phi: vec![0.25, 0.125],
        });
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["kind"], "ar");
        assert_eq!(v["mode"], "annual");
    }
}
