//! `crimenet` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crimenet::config::{ConfigError, PipelineConfig};
use crimenet::models::ModelKind;
use crimenet::pipeline::{self, PipelineError};
use crimenet::report;
use crimenet::{RmseConvention, SimilarityKind, Variant};

#[derive(Debug, Parser)]
#[command(name = "crimenet", version, about = "Crime forecasting from fused city data networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the configured data and persist the monthly cube under <out>/cube.
    Ingest(Overrides),
    /// Run networks, similarities, features, models and evaluation.
    Run(Overrides),
    /// Compare variants and write plot data for a finished run.
    Report {
        /// Result directory of a previous `run`.
        dir: PathBuf,
        /// Output directory; defaults to <dir>/report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic cube with its ground truth under <out>/cube.
    Synth(Overrides),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum VariantArg {
    Full,
    OnlyCrime,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ConventionArg {
    Paper,
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SimilarityArg {
    Cosine,
    Raw,
    #[value(name = "inverse_commute", alias = "inverse-commute")]
    InverseCommute,
}

/// Flags applied on top of the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Comma-separated subset of polyreg, svr, ar.
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    models: Option<Vec<ModelKind>>,
    /// Months between a feature row and its target.
    #[arg(long)]
    alignment: Option<usize>,
    #[arg(long, value_enum)]
    similarity: Option<SimilarityArg>,
    #[arg(long, value_enum)]
    rmse_convention: Option<ConventionArg>,
    /// Replace negative predictions by zero before evaluation.
    #[arg(long)]
    clamp_nonnegative: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.trim().parse()
}

impl Overrides {
    fn load(&self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let mut cfg = PipelineConfig::from_toml(&text, path)?;
                cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
                cfg
            }
            None => PipelineConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.variant {
            cfg.network.variants = match v {
                VariantArg::Full => vec![Variant::Full],
                VariantArg::OnlyCrime => vec![Variant::OnlyCrime],
                VariantArg::Both => Variant::BOTH.to_vec(),
            };
        }
        if let Some(m) = &self.models {
            let mut kinds = m.clone();
            kinds.sort();
            kinds.dedup();
            cfg.models.kinds = kinds;
        }
        if let Some(a) = self.alignment {
            cfg.features.alignment = a;
        }
        if let Some(s) = self.similarity {
            cfg.similarity.kind = match s {
                SimilarityArg::Cosine => SimilarityKind::Cosine,
                SimilarityArg::Raw => SimilarityKind::Raw,
                SimilarityArg::InverseCommute => SimilarityKind::InverseCommute,
            };
        }
        if let Some(c) = self.rmse_convention {
            cfg.evaluate.rmse_convention = match c {
                ConventionArg::Paper => RmseConvention::Paper,
                ConventionArg::Cells => RmseConvention::Cells,
            };
        }
        if self.clamp_nonnegative {
            cfg.evaluate.clamp_nonnegative = true;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
    }
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_ingest(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let (source, dir) = pipeline::ingest(cfg)?;
    for line in &source.report {
        println!("{line}");
    }
    print_warnings(&source.warnings);
    println!("annual totals:");
    for line in pipeline::annual_totals_report(&source.cube) {
        println!("  {line}");
    }
    println!("cube written to {}", dir.display());
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let (outcome, written) = pipeline::run(cfg)?;
    print_warnings(&outcome.warnings);
    for t in &outcome.timings {
        println!("{:<28} {:>9.3}s", t.stage, t.seconds);
    }
    println!("wrote {} files to {}", written.len(), cfg.output.dir.display());
    Ok(())
}

fn cmd_report(dir: &Path, out: Option<&Path>) -> Result<(), PipelineError> {
    let bundle = report::read_bundle_reports(dir)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("report"));
    let summary = report::write_report(&bundle, &out)?;
    for n in &summary.notices {
        eprintln!("notice: {n}");
    }
    for h in &summary.highlights {
        println!("{h}");
    }
    for p in &summary.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_synth(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let dir = pipeline::synth(cfg)?;
    println!("synthetic cube written to {}", dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest(o) => {
            let cfg = o.load()?;
            cfg.validate()?;
            cmd_ingest(&cfg)
        }
        Command::Run(o) => {
            let cfg = o.load()?;
            cfg.validate()?;
            cmd_run(&cfg)
        }
        Command::Report { dir, out } => cmd_report(&dir, out.as_deref()),
        Command::Synth(o) => {
            let mut cfg = o.load()?;
            cfg.data.synthetic = true;
            cfg.validate()?;
            cmd_synth(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
