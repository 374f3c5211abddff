//! On-disk cube bundle: a directory holding a versioned `manifest.json` and
//! one CSV per table. Zero counts are omitted from the count tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    CommunityId, CrimeTypeRegistry, IngestError, Library, MonthlyCube, PoliceStation, School,
};
use crate::month::MonthRange;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    span: MonthRange,
    n_communities: usize,
    crime_types: CrimeTypeRegistry,
    request_types: Vec<String>,
    libraries: Vec<Library>,
    schools: Vec<School>,
    police: Vec<PoliceStation>,
}

fn bundle_err(e: impl std::fmt::Display) -> IngestError {
    IngestError::Bundle(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|source| IngestError::Csv {
        context: path.display().to_string(),
        source,
    })?;
    let ctx = |source| IngestError::Csv {
        context: path.display().to_string(),
        source,
    };
    w.write_record(header).map_err(ctx)?;
    for r in rows {
        w.write_record(&r).map_err(ctx)?;
    }
    w.flush().map_err(io_err(path))
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>, IngestError> {
    let mut r = csv::Reader::from_path(path).map_err(|source| IngestError::Csv {
        context: path.display().to_string(),
        source,
    })?;
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| IngestError::Csv {
            context: path.display().to_string(),
            source,
        })
}

pub fn write_bundle(cube: &MonthlyCube, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        format_version: BUNDLE_FORMAT_VERSION,
        span: cube.span,
        n_communities: cube.n_communities,
        crime_types: cube.crime_types.clone(),
        request_types: cube.request_types.clone(),
        libraries: cube.libraries.clone(),
        schools: cube.schools.clone(),
        police: cube.police.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(bundle_err)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    let months: Vec<_> = cube.span.iter().collect();
    let mut crimes = Vec::new();
    let mut calls = Vec::new();
    let mut visits = Vec::new();
    for (i, m) in months.iter().enumerate() {
        for c in cube.communities() {
            for t in 0..cube.n_types() {
                let v = cube.crime_count(i, c, t);
                if v > 0 {
                    crimes.push(vec![m.to_string(), c.to_string(), t.to_string(), v.to_string()]);
                }
            }
            for r in 0..cube.request_types.len() {
                let v = cube.service_calls(i, c, r);
                if v > 0 {
                    calls.push(vec![m.to_string(), c.to_string(), r.to_string(), v.to_string()]);
                }
            }
        }
        for l in 0..cube.libraries.len() {
            let v = cube.library_visits(i, l);
            if v > 0 {
                visits.push(vec![m.to_string(), l.to_string(), v.to_string()]);
            }
        }
    }
    write_csv(
        &dir.join("crime_counts.csv"),
        &["month", "community", "type_index", "count"],
        crimes,
    )?;
    write_csv(
        &dir.join("service_calls.csv"),
        &["month", "community", "request_index", "count"],
        calls,
    )?;
    write_csv(
        &dir.join("library_visits.csv"),
        &["month", "library_index", "visitors"],
        visits,
    )?;
    let borders = cube
        .border_pairs()
        .into_iter()
        .map(|(a, b)| vec![a.to_string(), b.to_string()])
        .collect();
    write_csv(&dir.join("adjacency.csv"), &["community", "neighbor"], borders)
}

pub fn read_bundle(dir: &Path) -> Result<MonthlyCube, IngestError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(bundle_err)?;
    if m.format_version != BUNDLE_FORMAT_VERSION {
        return Err(IngestError::Bundle(format!(
            "unsupported format version {}",
            m.format_version
        )));
    }
    let n = m.n_communities;
    let mut cube = MonthlyCube::new(
        m.span,
        n,
        m.crime_types,
        m.libraries,
        m.request_types,
        m.schools,
        m.police,
    );
    let month_idx = |s: &str| -> Result<usize, IngestError> {
        let ym = s.parse().map_err(bundle_err)?;
        cube_span_index(m.span, ym)
    };
    let community = |s: &str| -> Result<CommunityId, IngestError> {
        s.parse::<usize>()
            .ok()
            .and_then(|id| CommunityId::new(id, n))
            .ok_or_else(|| IngestError::Bundle(format!("bad community `{s}`")))
    };
    let num = |s: &str| -> Result<u64, IngestError> { s.parse().map_err(bundle_err) };

    for r in read_csv(&dir.join("crime_counts.csv"))? {
        let t = num(&r[2])? as usize;
        if t >= cube.n_types() {
            return Err(IngestError::Bundle(format!("type index {t} out of range")));
        }
        cube.set_crime_count(month_idx(&r[0])?, community(&r[1])?, t, num(&r[3])? as u32);
    }
    for r in read_csv(&dir.join("service_calls.csv"))? {
        let k = num(&r[2])? as usize;
        if k >= cube.request_types.len() {
            return Err(IngestError::Bundle(format!("request index {k} out of range")));
        }
        cube.set_service_calls(month_idx(&r[0])?, community(&r[1])?, k, num(&r[3])?);
    }
    for r in read_csv(&dir.join("library_visits.csv"))? {
        let l = num(&r[1])? as usize;
        if l >= cube.libraries.len() {
            return Err(IngestError::Bundle(format!("library index {l} out of range")));
        }
        cube.set_library_visits(month_idx(&r[0])?, l, num(&r[2])?);
    }
    for r in read_csv(&dir.join("adjacency.csv"))? {
        cube.set_adjacent(community(&r[0])?, community(&r[1])?);
    }
    Ok(cube)
}

fn cube_span_index(span: MonthRange, ym: crate::month::YearMonth) -> Result<usize, IngestError> {
    span.index_of(ym)
        .ok_or_else(|| IngestError::Bundle(format!("month {ym} outside span {span}")))
}
