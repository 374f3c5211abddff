//! Pipeline configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! synthetic = true
//!
//! [span]
//! train = ["2011-01", "2014-12"]
//! test = ["2015-01", "2015-12"]
//!
//! [models]
//! kinds = ["polyreg", "svr", "ar"]
//! ```
//!
//! Relative data paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::RmseConvention;
use crate::ingest::{LayerKind, SynthPlan, CHICAGO_COMMUNITIES};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::models::{LagMode, ModelKind, SvrParams};
use crate::month::{MonthRange, YearMonth};
use crate::netfuse::Variant;
use crate::similarity::SimilarityKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Generate the cube from `[synthetic]` instead of reading files.
    pub synthetic: bool,
    /// A cube bundle written by an earlier `ingest`; overrides the CSV paths.
    pub cube: Option<PathBuf>,
    pub n_communities: usize,
    pub crimes: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub library_visits: Option<PathBuf>,
    pub school: Option<PathBuf>,
    pub school_act: Option<PathBuf>,
    pub police_station: Option<PathBuf>,
    pub police_district: Option<PathBuf>,
    pub service311: Option<PathBuf>,
    pub borders: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synthetic: false,
            cube: None,
            n_communities: CHICAGO_COMMUNITIES,
            crimes: None,
            library: None,
            library_visits: None,
            school: None,
            school_act: None,
            police_station: None,
            police_district: None,
            service311: None,
            borders: None,
        }
    }
}

impl DataConfig {
    pub fn layer_path(&self, kind: LayerKind) -> Option<&PathBuf> {
        match kind {
            LayerKind::Library => self.library.as_ref(),
            LayerKind::LibraryVisits => self.library_visits.as_ref(),
            LayerKind::School => self.school.as_ref(),
            LayerKind::SchoolAct => self.school_act.as_ref(),
            LayerKind::PoliceStation => self.police_station.as_ref(),
            LayerKind::PoliceDistrict => self.police_district.as_ref(),
            LayerKind::Service311 => self.service311.as_ref(),
            LayerKind::Borders => self.borders.as_ref(),
        }
    }

    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [
            &mut self.cube,
            &mut self.crimes,
            &mut self.library,
            &mut self.library_visits,
            &mut self.school,
            &mut self.school_act,
            &mut self.police_station,
            &mut self.police_district,
            &mut self.service311,
            &mut self.borders,
        ]
        .into_iter()
        .filter_map(Option::as_mut)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanConfig {
    /// Inclusive first and last training month.
    pub train: [YearMonth; 2],
    /// Inclusive first and last test month.
    pub test: [YearMonth; 2],
}

impl Default for SpanConfig {
    fn default() -> Self {
        let ym = |s: &str| s.parse().expect("literal month");
        Self {
            train: [ym("2011-01"), ym("2014-12")],
            test: [ym("2015-01"), ym("2015-12")],
        }
    }
}

impl SpanConfig {
    /// The whole span covered by the cube.
    pub fn full(&self) -> MonthRange {
        MonthRange::new(self.train[0], self.test[1]).expect("validated span")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub variants: Vec<Variant>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            variants: Variant::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub kind: SimilarityKind,
    pub rank_tol: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            kind: SimilarityKind::Cosine,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    /// Months between a feature row and its target.
    pub alignment: usize,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self { alignment: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArConfig {
    pub lag: usize,
    pub lag_mode: LagMode,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self {
            lag: 2,
            lag_mode: LagMode::Monthly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub kinds: Vec<ModelKind>,
    pub svr: SvrParams,
    pub ar: ArConfig,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            kinds: ModelKind::ALL.to_vec(),
            svr: SvrParams::default(),
            ar: ArConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub rmse_convention: RmseConvention,
    pub clamp_nonnegative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write every fitted model as JSON.
    pub save_models: bool,
    /// Also write the per-type feature matrices.
    pub dump_datasets: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            save_models: false,
            dump_datasets: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the synthetic generator.
    pub seed: u64,
    pub data: DataConfig,
    pub span: SpanConfig,
    pub network: NetworkConfig,
    pub similarity: SimilarityConfig,
    pub features: FeaturesConfig,
    pub models: ModelsConfig,
    pub evaluate: EvaluateConfig,
    pub output: OutputConfig,
    /// Generator plan; its start month and length follow `[span]`.
    pub synthetic: SynthPlan,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.data.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Synthetic plan with its span taken from `[span]`.
    pub fn synth_plan(&self) -> SynthPlan {
        let full = self.span.full();
        SynthPlan {
            communities: self.data.n_communities,
            start: full.first,
            months: full.len(),
            ..self.synthetic.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let [t0, t1] = self.span.train;
        let [s0, s1] = self.span.test;
        if t1 < t0 || s1 < s0 {
            return bad("span ranges must run forward".into());
        }
        if s0 <= t1 {
            return bad(format!("test range {s0}..{s1} must follow the training range {t0}..{t1}"));
        }
        if self.data.n_communities < 3 {
            return bad("need at least 3 communities".into());
        }
        if self.network.variants.is_empty() {
            return bad("no network variant selected".into());
        }
        if self.models.kinds.is_empty() {
            return bad("no model selected".into());
        }
        if self.similarity.rank_tol.is_nan() || self.similarity.rank_tol < 0.0 {
            return bad("similarity.rank_tol must be non-negative".into());
        }
        self.models
            .svr
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        if self.models.ar.lag == 0 {
            return bad("models.ar.lag must be at least 1".into());
        }
        let train_len = t1.months_since(t0) as usize + 1;
        if train_len < self.features.alignment + 12 || self.features.alignment == 0 {
            return bad(format!(
                "alignment {} needs a training span of at least alignment + 12 months",
                self.features.alignment
            ));
        }
        let data = &self.data;
        if data.synthetic {
            self.synth_plan()
                .validate()
                .or_else(|e| bad(e.to_string()))?;
        } else if let Some(cube) = &data.cube {
            if !cube.join("manifest.json").is_file() {
                return bad(format!("cube bundle {} not found", cube.display()));
            }
        } else {
            let crimes = data
                .crimes
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("data.crimes is required unless synthetic or cube is set".into()))?;
            let listed = std::iter::once(crimes).chain(LayerKind::ALL.iter().filter_map(|&k| data.layer_path(k)));
            for p in listed {
                if !p.is_file() {
                    return bad(format!("data file {} not found", p.display()));
                }
            }
        }
        Ok(())
    }
}
