//! End-to-end experiment: cube → networks → similarities → neighbors →
//! features → models → predictions → reports.

use std::fs::{self, File};
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::evaluate::{
    PredictionEntry, PredictionSet, RmseReport, BOXSTATS_HEADER, RMSE_HEADER,
};
use crate::features::{build_features, FeatureBlock, FeatureError, Split};
use crate::ingest::{
    aggregate_monthly, generate_synthetic, load_crimes, load_layer, read_bundle, write_bundle,
    GroundTruth, IngestError, LayerKind, MonthlyCube,
};
use crate::models::{
    fit_ar_pooled, fit_polyreg, fit_svr_with_kernel, forecast_ar, kernel_matrix, predict_polyreg,
    predict_svr, ModelError, ModelKind, TrainedModel,
};
use crate::netfuse::{build_network, NetError, Variant};
use crate::similarity::{
    aggregate_similarities, monthly_similarities, CommunitySimilarity, SimError, TopKNeighbors,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Internal { stage: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incomplete result bundle {dir}: missing {missing}")]
    IncompleteBundle { dir: PathBuf, missing: String },
}

impl PipelineError {
    /// Process exit code: 1 configuration, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data { .. } | PipelineError::Io { .. } | PipelineError::IncompleteBundle { .. } => 2,
            PipelineError::Internal { .. } => 3,
        }
    }
}

fn data(stage: &'static str) -> impl FnOnce(String) -> PipelineError {
    move |message| PipelineError::Data { stage, message }
}

fn internal<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Internal {
        stage,
        message: e.to_string(),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidPlan(m) => PipelineError::Config(ConfigError::Invalid(m)),
            other => PipelineError::Data {
                stage: "ingest",
                message: other.to_string(),
            },
        }
    }
}

impl From<NetError> for PipelineError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::UnmappedCommunity(_) => data("networks")(e.to_string()),
            other => internal("networks")(other),
        }
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::TooFewCommunities { .. } => data("similarity")(e.to_string()),
            other => internal("similarity")(other),
        }
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::SpanTooShort { .. } | FeatureError::InvalidSplit(_) => {
                PipelineError::Config(ConfigError::Invalid(e.to_string()))
            }
            FeatureError::MonthOutOfSpan { .. } => data("features")(e.to_string()),
            other => internal("features")(other),
        }
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidHyperparameters(m) => PipelineError::Config(ConfigError::Invalid(m)),
            ModelError::SeriesTooShort { .. } | ModelError::HistoryTooShort { .. } => {
                data("models")(e.to_string())
            }
            other => internal("models")(other),
        }
    }
}

/// A cube together with how it was obtained.
#[derive(Debug, Clone)]
pub struct CubeSource {
    pub cube: MonthlyCube,
    /// Human-readable ingestion report, one line per entry.
    pub report: Vec<String>,
    pub warnings: Vec<String>,
    pub truth: Option<GroundTruth>,
}

/// Reads the configured source: synthetic generator, cube bundle, or raw
/// CSV files.
pub fn load_cube(cfg: &PipelineConfig) -> Result<CubeSource, PipelineError> {
    if cfg.data.synthetic {
        let plan = cfg.synth_plan();
        let (cube, truth) = generate_synthetic(cfg.seed, &plan)?;
        let report = vec![format!(
            "synthetic cube: seed {}, {} communities, {} crime types, {} months",
            cfg.seed,
            cube.n_communities,
            cube.n_types(),
            cube.n_months()
        )];
        return Ok(CubeSource {
            cube,
            report,
            warnings: Vec::new(),
            truth: Some(truth),
        });
    }
    if let Some(dir) = &cfg.data.cube {
        let cube = read_bundle(dir)?;
        let report = vec![format!("cube bundle {}", dir.display())];
        return Ok(CubeSource {
            cube,
            report,
            warnings: Vec::new(),
            truth: None,
        });
    }
    ingest_files(cfg)
}

fn ingest_files(cfg: &PipelineConfig) -> Result<CubeSource, PipelineError> {
    let span = cfg.span.full();
    let n = cfg.data.n_communities;
    let crimes_path = cfg
        .data
        .crimes
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("data.crimes is required".into()))?;
    let crimes = load_crimes(crimes_path, span, n)?;
    let mut report = vec![format!(
        "crimes: {} records kept, {} rows skipped ({})",
        crimes.records.len(),
        crimes.skipped,
        crimes_path.display()
    )];
    let mut layers = Vec::new();
    for kind in LayerKind::ALL {
        if let Some(path) = cfg.data.layer_path(kind) {
            let table = load_layer(kind, path, n)?;
            report.push(format!(
                "{kind}: {} rows kept, {} rows skipped",
                table.rows.len(),
                table.skipped
            ));
            layers.push(table);
        }
    }
    let agg = aggregate_monthly(&crimes.records, &layers, span, n);
    Ok(CubeSource {
        cube: agg.cube,
        report,
        warnings: agg.warnings,
        truth: None,
    })
}

/// Per-type, per-year crime totals, one line per type.
pub fn annual_totals_report(cube: &MonthlyCube) -> Vec<String> {
    let years: Vec<i32> = {
        let mut y: Vec<i32> = cube.span.iter().map(|m| m.year()).collect();
        y.dedup();
        y
    };
    let mut lines = vec![format!(
        "type{}",
        years.iter().map(|y| format!(",{y}")).collect::<String>()
    )];
    for (t, label) in cube.crime_types.labels().iter().enumerate() {
        let cells: String = years
            .iter()
            .map(|&y| format!(",{}", cube.annual_type_total(y, t)))
            .collect();
        lines.push(format!("{label}{cells}"));
    }
    lines
}

/// Cube month indices of the configured train and test ranges.
pub fn split_for(cube: &MonthlyCube, cfg: &PipelineConfig) -> Result<Split, PipelineError> {
    let idx = |m| {
        cube.span.index_of(m).ok_or_else(|| {
            data("span")(format!(
                "month {m} is outside the cube span {}..{}",
                cube.span.first, cube.span.last
            ))
        })
    };
    let [t0, t1] = cfg.span.train;
    let [s0, s1] = cfg.span.test;
    let split = Split {
        train: idx(t0)?..idx(t1)? + 1,
        test: idx(s0)?..idx(s1)? + 1,
        alignment: cfg.features.alignment,
    };
    split.validate(cube.n_months())?;
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Intermediate artifacts of one network variant.
#[derive(Debug, Clone)]
pub struct VariantArtifacts {
    pub variant: Variant,
    pub similarity: CommunitySimilarity,
    pub neighbors: TopKNeighbors,
    /// `(crime type, model)` for every fitted model.
    pub models: Vec<(usize, TrainedModel)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub predictions: PredictionSet,
    pub reports: Vec<RmseReport>,
    pub variants: Vec<VariantArtifacts>,
    pub timings: Vec<Timing>,
    pub warnings: Vec<String>,
}

struct Stopwatch {
    timings: Vec<Timing>,
    start: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: impl Into<String>) {
        let stage = stage.into();
        let seconds = self.start.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.3}s");
        self.timings.push(Timing { stage, seconds });
        self.start = Instant::now();
    }
}

/// Fitted model and test-row predictions of one (type, model) job.
struct Fit {
    model: TrainedModel,
    predicted: Vec<f64>,
}

fn fit_feature_model(
    kind: ModelKind,
    block: &FeatureBlock,
    y_train: &[f64],
    kernel: Option<&DMatrix<f64>>,
    cfg: &PipelineConfig,
) -> Result<Fit, ModelError> {
    let rows = |x: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
    };
    let test_rows = rows(&block.x_test);
    match kind {
        ModelKind::PolyReg => {
            let y = nalgebra::DVector::from_column_slice(y_train);
            let m = fit_polyreg(&block.x_train, &y)?;
            let predicted = test_rows
                .iter()
                .map(|r| predict_polyreg(&m, r))
                .collect::<Result<_, _>>()?;
            Ok(Fit {
                model: TrainedModel::PolyReg(m),
                predicted,
            })
        }
        ModelKind::Svr => {
            let k = kernel.expect("kernel computed when SVR is selected");
            let m = fit_svr_with_kernel(&block.x_train, k, y_train, &cfg.models.svr)?;
            let predicted = test_rows
                .par_iter()
                .map(|r| predict_svr(&m, r))
                .collect::<Result<_, _>>()?;
            Ok(Fit {
                model: TrainedModel::Svr(m),
                predicted,
            })
        }
        ModelKind::Ar => unreachable!("AR does not use fused features"),
    }
}

/// Pooled AR per crime type over the training months; forecasts cover the
/// test months, community by community, month-major.
fn fit_ar_all(cube: &MonthlyCube, split: &Split, cfg: &PipelineConfig) -> Result<Vec<Fit>, ModelError> {
    let n_types = cube.n_types();
    let train: Range<usize> = split.train.clone();
    let skip = split.test.start - train.end;
    let horizon = split.test.end - train.end;
    (0..n_types)
        .into_par_iter()
        .map(|t| {
            let series: Vec<Vec<f64>> = cube
                .communities()
                .map(|c| train.clone().map(|i| cube.crime_count(i, c, t) as f64).collect())
                .collect();
            let m = fit_ar_pooled(&series, cfg.models.ar.lag, cfg.models.ar.lag_mode)?;
            let forecasts = series
                .iter()
                .map(|s| forecast_ar(&m, s, horizon))
                .collect::<Result<Vec<_>, _>>()?;
            let predicted = (skip..horizon)
                .flat_map(|h| forecasts.iter().map(move |f| f[h]))
                .collect();
            Ok(Fit {
                model: TrainedModel::Ar(m),
                predicted,
            })
        })
        .collect()
}

/// Runs every configured variant and model on `cube`. Writes nothing.
pub fn run_experiment(cube: &MonthlyCube, cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    let split = split_for(cube, cfg)?;
    let mut watch = Stopwatch::new();
    let mut warnings = Vec::new();
    let n_types = cube.n_types();
    let type_labels = cube.crime_types.labels().to_vec();
    let kinds: Vec<ModelKind> = ModelKind::ALL
        .into_iter()
        .filter(|k| cfg.models.kinds.contains(k))
        .collect();

    let ar_fits = if kinds.contains(&ModelKind::Ar) {
        let fits = fit_ar_all(cube, &split, cfg)?;
        watch.lap("fit ar");
        Some(fits)
    } else {
        None
    };

    let mut entries = Vec::new();
    let mut variants = Vec::new();
    for &variant in &cfg.network.variants {
        let nets = split
            .train
            .clone()
            .into_par_iter()
            .map(|m| build_network(cube, m, variant))
            .collect::<Result<Vec<_>, _>>()?;
        watch.lap(format!("{variant}: networks"));
        let monthly = monthly_similarities(&nets, cfg.similarity.kind, cfg.similarity.rank_tol)?;
        let similarity = aggregate_similarities(&monthly)?;
        let neighbors = TopKNeighbors::from_similarity(&similarity)?;
        watch.lap(format!("{variant}: similarity"));
        let block = build_features(cube, &neighbors, &split)?;
        watch.lap(format!("{variant}: features"));

        let kernel = kinds.contains(&ModelKind::Svr).then(|| {
            let gamma = cfg.models.svr.resolved_gamma(block.x_train.ncols());
            kernel_matrix(&block.x_train, &block.x_train, gamma)
        });
        let jobs: Vec<(usize, ModelKind)> = (0..n_types)
            .flat_map(|t| kinds.iter().filter(|&&k| k != ModelKind::Ar).map(move |&k| (t, k)))
            .collect();
        let targets: Vec<Vec<f64>> = (0..n_types)
            .map(|t| block.train_targets(cube, t))
            .collect();
        let fits = jobs
            .par_iter()
            .map(|&(t, k)| fit_feature_model(k, &block, &targets[t], kernel.as_ref(), cfg))
            .collect::<Result<Vec<_>, _>>()?;
        watch.lap(format!("{variant}: fit"));

        let mut fitted: Vec<((usize, ModelKind), Fit)> = jobs.into_iter().zip(fits).collect();
        if let Some(ar) = &ar_fits {
            for (t, f) in ar.iter().enumerate() {
                fitted.push((
                    (t, ModelKind::Ar),
                    Fit {
                        model: f.model.clone(),
                        predicted: f.predicted.clone(),
                    },
                ));
            }
        }
        fitted.sort_by_key(|(key, _)| *key);

        let mut models = Vec::with_capacity(fitted.len());
        for ((t, kind), fit) in fitted {
            if let TrainedModel::Svr(m) = &fit.model {
                if !m.converged {
                    let msg = format!(
                        "{variant}: SVR for {} stopped after {} iterations without meeting the tolerance",
                        type_labels[t], m.iterations
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
            for (key, &p) in block.test_keys.iter().zip(&fit.predicted) {
                let target = key.month + split.alignment;
                entries.push(PredictionEntry {
                    month: cube.span.month_at(target),
                    community: key.community,
                    crime_type: t,
                    actual: cube.crime_count(target, key.community, t) as f64,
                    predicted: p,
                    model: kind,
                    variant,
                });
            }
            models.push((t, fit.model));
        }
        variants.push(VariantArtifacts {
            variant,
            similarity,
            neighbors,
            models,
        });
    }

    let mut predictions = PredictionSet {
        type_labels,
        entries,
    };
    if cfg.evaluate.clamp_nonnegative {
        predictions.clamp_nonnegative();
    }
    let reports = cfg
        .network
        .variants
        .iter()
        .map(|&v| RmseReport::from_predictions(&predictions, v, cfg.evaluate.rmse_convention))
        .collect();
    watch.lap("evaluate");
    Ok(RunOutcome {
        predictions,
        reports,
        variants,
        timings: watch.timings,
        warnings,
    })
}

pub const RMSE_FILE: &str = "rmse_summary.csv";
pub const BOXSTATS_FILE: &str = "boxstats.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    rmse_convention: String,
    quantiles: &'static str,
    config: &'a PipelineConfig,
    cube: CubeSummary,
    outputs: Vec<String>,
    timings: &'a [Timing],
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct CubeSummary {
    first_month: String,
    last_month: String,
    communities: usize,
    crime_types: usize,
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn finish(w: BufWriter<File>, path: &Path) -> Result<(), PipelineError> {
    w.into_inner()
        .map_err(|e| e.into_error())
        .and_then(|f| f.sync_all())
        .map_err(io_err(path))
}

/// Writes the result bundle into `cfg.output.dir` and returns the file names
/// written.
pub fn write_outputs(
    outcome: &RunOutcome,
    source: &CubeSource,
    cfg: &PipelineConfig,
) -> Result<Vec<String>, PipelineError> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join(RMSE_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(RMSE_HEADER).map_err(|e| io_err(&path)(e.into()))?;
    for r in &outcome.reports {
        r.write_rmse_csv(&mut w).map_err(io_err(&path))?;
    }
    finish(w.into_inner().map_err(|e| io_err(&path)(e.into_error()))?, &path)?;
    written.push(RMSE_FILE.to_string());

    let path = dir.join(BOXSTATS_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(BOXSTATS_HEADER).map_err(|e| io_err(&path)(e.into()))?;
    for r in &outcome.reports {
        r.write_boxstats_csv(&mut w).map_err(io_err(&path))?;
    }
    finish(w.into_inner().map_err(|e| io_err(&path)(e.into_error()))?, &path)?;
    written.push(BOXSTATS_FILE.to_string());

    let path = dir.join(PREDICTIONS_FILE);
    let mut w = create(&path)?;
    outcome.predictions.write_csv(&mut w).map_err(io_err(&path))?;
    finish(w, &path)?;
    written.push(PREDICTIONS_FILE.to_string());

    for art in &outcome.variants {
        let name = format!("similarity_{}.csv", art.variant);
        let path = dir.join(&name);
        let mut w = create(&path)?;
        art.similarity.write_csv(&mut w).map_err(io_err(&path))?;
        finish(w, &path)?;
        written.push(name);

        let name = format!("neighbors_{}.csv", art.variant);
        let path = dir.join(&name);
        let mut w = create(&path)?;
        art.neighbors.write_csv(&mut w).map_err(io_err(&path))?;
        finish(w, &path)?;
        written.push(name);

        if cfg.output.save_models {
            let sub = dir.join("models").join(art.variant.name());
            fs::create_dir_all(&sub).map_err(io_err(&sub))?;
            for (t, model) in &art.models {
                let name = format!("{}_{}.json", model.kind(), slug(&outcome.predictions.type_labels[*t]));
                model.save(&sub.join(&name)).map_err(PipelineError::from)?;
                written.push(format!("models/{}/{name}", art.variant));
            }
        }
    }

    let path = dir.join(CONFIG_SNAPSHOT_FILE);
    fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;
    written.push(CONFIG_SNAPSHOT_FILE.to_string());

    let mut warnings = source.warnings.clone();
    warnings.extend(outcome.warnings.iter().cloned());
    let manifest = Manifest {
        tool: "crimenet",
        version: env!("CARGO_PKG_VERSION"),
        rmse_convention: cfg.evaluate.rmse_convention.to_string(),
        quantiles: "linear interpolation at rank p*(n-1)",
        config: cfg,
        cube: CubeSummary {
            first_month: source.cube.span.first.to_string(),
            last_month: source.cube.span.last.to_string(),
            communities: source.cube.n_communities,
            crime_types: source.cube.n_types(),
        },
        outputs: written.clone(),
        timings: &outcome.timings,
        warnings,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(internal("manifest"))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(MANIFEST_FILE.to_string());
    Ok(written)
}

/// `ingest`: obtains the cube and persists it under `<out>/cube`.
pub fn ingest(cfg: &PipelineConfig) -> Result<(CubeSource, PathBuf), PipelineError> {
    let source = load_cube(cfg)?;
    let dir = cfg.output.dir.join("cube");
    write_bundle(&source.cube, &dir)?;
    Ok((source, dir))
}

/// `run`: obtains the cube, runs the experiment and writes the bundle.
pub fn run(cfg: &PipelineConfig) -> Result<(RunOutcome, Vec<String>), PipelineError> {
    let source = load_cube(cfg)?;
    let outcome = run_experiment(&source.cube, cfg)?;
    let written = write_outputs(&outcome, &source, cfg)?;
    Ok((outcome, written))
}

/// `synth`: generates the configured synthetic cube and writes it with its
/// ground truth under `<out>/cube`.
pub fn synth(cfg: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    let plan = cfg.synth_plan();
    let (cube, truth) = generate_synthetic(cfg.seed, &plan)?;
    let dir = cfg.output.dir.join("cube");
    write_bundle(&cube, &dir)?;
    let path = dir.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&truth).map_err(internal("synth"))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(dir)
}
