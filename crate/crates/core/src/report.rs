//! Post-run report: variant comparison tables and plot-ready box data, read
//! back from a result bundle.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::evaluate::{
    compare_variants, top_types, BoxStats, Comparison, ReportRow, RmseConvention, RmseReport,
    TOP_TYPES,
};
use crate::fmt::sig9;
use crate::models::ModelKind;
use crate::netfuse::Variant;
use crate::pipeline::{
    io_err, PipelineError, BOXSTATS_FILE, MANIFEST_FILE, PREDICTIONS_FILE, RMSE_FILE,
};

#[derive(Debug, Deserialize)]
struct RmseRecord {
    #[serde(rename = "type")]
    crime_type: String,
    model: ModelKind,
    variant: Variant,
    rmse: String,
}

#[derive(Debug, Deserialize)]
struct BoxRecord {
    #[serde(rename = "type")]
    crime_type: String,
    model: ModelKind,
    variant: Variant,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

#[derive(Debug, Deserialize)]
struct PredictionRecord {
    #[serde(rename = "type")]
    crime_type: String,
    model: ModelKind,
    variant: Variant,
    actual: f64,
}

/// Per-variant reports reconstructed from a result bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub reports: Vec<RmseReport>,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let bad = |e: csv::Error| PipelineError::Data {
        stage: "report",
        message: format!("{}: {e}", path.display()),
    };
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(bad)
}

fn parse_rmse(raw: &str, path: &Path) -> Result<Option<f64>, PipelineError> {
    if raw == "NA" {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| PipelineError::Data {
        stage: "report",
        message: format!("{}: invalid rmse `{raw}`", path.display()),
    })
}

/// Reads `rmse_summary.csv`, `boxstats.csv` and `predictions.csv` from `dir`.
pub fn read_bundle_reports(dir: &Path) -> Result<Bundle, PipelineError> {
    let missing: Vec<&str> = [RMSE_FILE, BOXSTATS_FILE, PREDICTIONS_FILE]
        .into_iter()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::IncompleteBundle {
            dir: dir.to_path_buf(),
            missing: missing.join(", "),
        });
    }
    let convention = fs::read_to_string(dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("rmse_convention")?.as_str()?.parse().ok())
        .unwrap_or(RmseConvention::Paper);

    let rmse_path = dir.join(RMSE_FILE);
    let rmse_rows: Vec<RmseRecord> = read_csv(&rmse_path)?;
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for r in &rmse_rows {
        if !index.contains_key(&r.crime_type) {
            index.insert(r.crime_type.clone(), labels.len());
            labels.push(r.crime_type.clone());
        }
    }
    let type_of = |label: &str, file: &str| {
        index.get(label).copied().ok_or_else(|| PipelineError::Data {
            stage: "report",
            message: format!("{file}: type `{label}` absent from {RMSE_FILE}"),
        })
    };

    let box_rows: Vec<BoxRecord> = read_csv(&dir.join(BOXSTATS_FILE))?;
    let mut boxes: HashMap<(Variant, usize, ModelKind), BoxStats> = HashMap::new();
    for b in box_rows {
        let t = type_of(&b.crime_type, BOXSTATS_FILE)?;
        boxes.insert(
            (b.variant, t, b.model),
            BoxStats {
                min: b.min,
                q1: b.q1,
                median: b.median,
                q3: b.q3,
                max: b.max,
            },
        );
    }

    let preds: Vec<PredictionRecord> = read_csv(&dir.join(PREDICTIONS_FILE))?;
    let mut totals = vec![0.0; labels.len()];
    if let Some(first) = preds.first() {
        let (v, m) = (first.variant, first.model);
        for p in preds.iter().filter(|p| p.variant == v && p.model == m) {
            totals[type_of(&p.crime_type, PREDICTIONS_FILE)?] += p.actual;
        }
    }

    let mut by_variant: BTreeMap<Variant, BTreeMap<(usize, ModelKind), ReportRow>> = BTreeMap::new();
    let mut order: Vec<Variant> = Vec::new();
    for r in &rmse_rows {
        let t = index[&r.crime_type];
        let errors = boxes.get(&(r.variant, t, r.model)).copied().ok_or_else(|| {
            PipelineError::IncompleteBundle {
                dir: dir.to_path_buf(),
                missing: format!("{BOXSTATS_FILE} row for ({}, {}, {})", r.crime_type, r.model, r.variant),
            }
        })?;
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
        by_variant.entry(r.variant).or_default().insert(
            (t, r.model),
            ReportRow {
                rmse: parse_rmse(&r.rmse, &rmse_path)?,
                errors,
            },
        );
    }
    let reports = order
        .into_iter()
        .map(|v| RmseReport {
            variant: v,
            convention,
            type_labels: labels.clone(),
            totals: totals.clone(),
            rows: by_variant.remove(&v).unwrap_or_default(),
        })
        .collect();
    Ok(Bundle {
        dir: dir.to_path_buf(),
        reports,
    })
}

/// Files written by [`write_report`] and messages for the user.
#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub written: Vec<PathBuf>,
    pub notices: Vec<String>,
    /// Lines like `svr: full better on 9 of 11 types (top 11)`.
    pub highlights: Vec<String>,
}

fn write_plot(path: &Path, reports: &[RmseReport], types: &[usize]) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| io_err(path)(e.into());
    w.write_record([
        "variant", "rank", "type", "total", "model", "rmse", "min", "q1", "median", "q3", "max",
    ])
    .map_err(wrap)?;
    for r in reports {
        for (rank, &t) in types.iter().enumerate() {
            for ((_, m), row) in r.rows.range((t, ModelKind::PolyReg)..=(t, ModelKind::Ar)) {
                let b = row.errors;
                w.write_record([
                    r.variant.to_string(),
                    (rank + 1).to_string(),
                    r.type_labels[t].clone(),
                    sig9(r.totals[t]),
                    m.to_string(),
                    row.rmse.map(sig9).unwrap_or_else(|| "NA".into()),
                    sig9(b.min),
                    sig9(b.q1),
                    sig9(b.median),
                    sig9(b.q3),
                    sig9(b.max),
                ])
                .map_err(wrap)?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_comparison(path: &Path, c: &Comparison) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    c.write_csv(file).map_err(io_err(path))
}

/// Writes comparison tables and plot data for `bundle` into `out`.
pub fn write_report(bundle: &Bundle, out: &Path) -> Result<ReportSummary, PipelineError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut summary = ReportSummary::default();
    let Some(first) = bundle.reports.first() else {
        return Err(PipelineError::IncompleteBundle {
            dir: bundle.dir.clone(),
            missing: format!("rows in {RMSE_FILE}"),
        });
    };
    let totals = &first.totals;
    let top = top_types(totals, TOP_TYPES);
    let all = top_types(totals, totals.len());

    for (name, types) in [("plot_top11.csv", &top), ("plot_all.csv", &all)] {
        let path = out.join(name);
        write_plot(&path, &bundle.reports, types)?;
        summary.written.push(path);
    }

    let find = |v: Variant| bundle.reports.iter().find(|r| r.variant == v);
    let (Some(full), Some(only)) = (find(Variant::Full), find(Variant::OnlyCrime)) else {
        summary.notices.push(format!(
            "bundle has a single network variant ({}); comparison skipped",
            first.variant
        ));
        return Ok(summary);
    };
    let cmp = compare_variants(full, only).map_err(|e| PipelineError::Data {
        stage: "report",
        message: e.to_string(),
    })?;
    let cmp_top = cmp.restricted_to(&top);
    for (name, c) in [("comparison.csv", &cmp), ("comparison_top11.csv", &cmp_top)] {
        let path = out.join(name);
        write_comparison(&path, c)?;
        summary.written.push(path);
    }

    let path = out.join("comparison_summary.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| io_err(&path)(e.into());
    let first_wins = format!("{}_better", cmp.first);
    w.write_record(["scope", "model", first_wins.as_str(), "compared"]).map_err(wrap)?;
    for (scope, c) in [("top11", &cmp_top), ("all", &cmp)] {
        for (model, (wins, defined)) in c.wins() {
            w.write_record([scope.to_string(), model.to_string(), wins.to_string(), defined.to_string()])
                .map_err(wrap)?;
            summary.highlights.push(format!(
                "{model}: {} better on {wins} of {defined} types ({scope})",
                cmp.first
            ));
        }
    }
    w.flush().map_err(io_err(&path))?;
    summary.written.push(path);
    Ok(summary)
}
