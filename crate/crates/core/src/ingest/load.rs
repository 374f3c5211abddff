use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use log::debug;

use super::{CommunityId, CrimeRecord, IngestError, LayerKind, LayerRow, LayerTable};
use crate::month::{MonthRange, YearMonth};

/// Parsed crime records plus the number of rows dropped on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrimeLoad {
    pub records: Vec<CrimeRecord>,
    pub skipped: usize,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader)
}

fn column_indices<R: Read>(
    rdr: &mut csv::Reader<R>,
    wanted: &[&str],
    context: &str,
) -> Result<Vec<usize>, IngestError> {
    let headers = rdr.headers().map_err(|source| IngestError::Csv {
        context: context.to_string(),
        source,
    })?;
    wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h == *w)
                .ok_or_else(|| IngestError::MissingColumn {
                    context: context.to_string(),
                    column: w.to_string(),
                })
        })
        .collect()
}

/// Accepts the portal's `MM/DD/YYYY hh:mm:ss AM/PM` and ISO-8601 forms.
pub(crate) fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 5] = [
        "%m/%d/%Y %I:%M:%S %p",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f%:z",
        "%Y-%m-%dT%H:%M:%S%.fZ",
    ];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Reads the crime export. Rows with an unparseable date, a date outside
/// `span`, an empty type, or a missing/invalid community are skipped and
/// counted.
pub fn read_crimes<R: Read>(
    reader: R,
    span: MonthRange,
    n_communities: usize,
    context: &str,
) -> Result<CrimeLoad, IngestError> {
    let mut rdr = csv_reader(reader);
    let cols = column_indices(&mut rdr, &["Date", "Primary Type", "Community Area"], context)?;
    let mut out = CrimeLoad::default();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                debug!("{context}: malformed row: {e}");
                out.skipped += 1;
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| {
            let ts = parse_timestamp(rec.get(cols[0])?)?;
            let ty = rec.get(cols[1])?;
            if ty.is_empty() {
                return None;
            }
            let id: usize = rec.get(cols[2])?.parse().ok()?;
            let community = CommunityId::new(id, n_communities)?;
            Some(CrimeRecord {
                timestamp: ts,
                primary_type: ty.to_string(),
                community,
            })
        })();
        match parsed {
            Some(r) if span.contains(r.month()) => out.records.push(r),
            Some(_) => out.skipped += 1,
            None => {
                debug!("{context} line {line}: malformed crime row skipped");
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

pub fn load_crimes(
    path: &Path,
    span: MonthRange,
    n_communities: usize,
) -> Result<CrimeLoad, IngestError> {
    read_crimes(open(path)?, span, n_communities, &path.display().to_string())
}

pub fn load_layer(
    kind: LayerKind,
    path: &Path,
    n_communities: usize,
) -> Result<LayerTable, IngestError> {
    read_layer(kind, open(path)?, n_communities, &path.display().to_string())
}

/// Community field outcome: `Ok(None)` means empty/zero (skip the row).
fn community_field(
    raw: &str,
    n_communities: usize,
    context: &str,
    line: u64,
) -> Result<Option<CommunityId>, IngestError> {
    if raw.is_empty() {
        return Ok(None);
    }
    let unknown = || IngestError::UnknownCommunity {
        context: context.to_string(),
        line,
        value: raw.to_string(),
        max: n_communities,
    };
    let id: usize = raw.parse().map_err(|_| unknown())?;
    if id == 0 {
        return Ok(None);
    }
    CommunityId::new(id, n_communities).map(Some).ok_or_else(unknown)
}

fn nonneg_value(raw: &str, column: &str, context: &str, line: u64) -> Result<f64, IngestError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(IngestError::UnknownValue {
            context: context.to_string(),
            line,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Reads one auxiliary layer according to its fixed column schema.
///
/// Empty or zero community fields are skipped and counted; ids above
/// `n_communities` and negative or non-numeric values are errors.
pub fn read_layer<R: Read>(
    kind: LayerKind,
    reader: R,
    n_communities: usize,
    context: &str,
) -> Result<LayerTable, IngestError> {
    let mut rdr = csv_reader(reader);
    let names = kind.columns();
    let cols = column_indices(&mut rdr, names, context)?;
    let mut table = LayerTable {
        kind,
        rows: Vec::new(),
        skipped: 0,
    };
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                debug!("{context}: malformed row: {e}");
                table.skipped += 1;
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let key = field(0).to_string();
        if key.is_empty() {
            table.skipped += 1;
            continue;
        }
        let month = |i: usize| -> Result<YearMonth, IngestError> {
            field(i).parse().map_err(|_| IngestError::UnknownValue {
                context: context.to_string(),
                line,
                column: names[i].to_string(),
                value: field(i).to_string(),
            })
        };
        let row = |community, month, value| LayerRow {
            key: key.clone(),
            community,
            month,
            value,
        };
        let rows: Vec<LayerRow> = match kind {
            LayerKind::Library | LayerKind::School => {
                community_field(field(1), n_communities, context, line)?
                    .map(|c| row(Some(c), None, None))
                    .into_iter()
                    .collect()
            }
            LayerKind::LibraryVisits => {
                let m = month(1)?;
                let v = nonneg_value(field(2), names[2], context, line)?;
                vec![row(None, Some(m), Some(v))]
            }
            LayerKind::SchoolAct => {
                let v = nonneg_value(field(1), names[1], context, line)?;
                vec![row(None, None, Some(v))]
            }
            LayerKind::PoliceStation => vec![row(None, None, None)],
            LayerKind::PoliceDistrict => {
                let mut out = Vec::new();
                for part in field(1).split(';').map(str::trim).filter(|p| !p.is_empty()) {
                    if let Some(c) = community_field(part, n_communities, context, line)? {
                        out.push(row(Some(c), None, None));
                    }
                }
                out
            }
            LayerKind::Service311 => {
                match community_field(field(1), n_communities, context, line)? {
                    Some(c) => {
                        let m = month(2)?;
                        let v = nonneg_value(field(3), names[3], context, line)?;
                        vec![row(Some(c), Some(m), Some(v))]
                    }
                    None => Vec::new(),
                }
            }
            LayerKind::Borders => {
                // key holds the neighbor id, community the reference area
                let a = community_field(&key, n_communities, context, line)?;
                let b = community_field(field(1), n_communities, context, line)?;
                match (a, b) {
                    (Some(a), Some(b)) => vec![LayerRow {
                        key: b.to_string(),
                        community: Some(a),
                        month: None,
                        value: None,
                    }],
                    _ => Vec::new(),
                }
            }
        };
        if rows.is_empty() {
            table.skipped += 1;
        }
        table.rows.extend(rows);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span() -> MonthRange {
        MonthRange::new("2011-01".parse().unwrap(), "2015-12".parse().unwrap()).unwrap()
    }

    #[test]
    fn parses_portal_row() {
        let csv = "Date,Primary Type,Community Area\n01/15/2011 08:30:00 PM, THEFT, 32\n";
        let load = read_crimes(csv.as_bytes(), span(), 77, "t").unwrap();
        assert_eq!(load.skipped, 0);
        let r = &load.records[0];
        assert_eq!(r.primary_type, "THEFT");
        assert_eq!(r.community.get(), 32);
        assert_eq!(r.timestamp.to_string(), "2011-01-15 20:30:00");
    }

    #[test]
    fn accepts_iso_dates_and_extra_columns() {
        let csv = "ID,Date,Block,Primary Type,Community Area\n\
                   1,2013-05-02T10:00:00,X,ARSON,7\n\
                   2,2013-05-02,X,ARSON,7\n";
        let load = read_crimes(csv.as_bytes(), span(), 77, "t").unwrap();
        assert_eq!(load.records.len(), 2);
    }

    #[test]
    fn empty_file_with_header() {
        let load = read_crimes("Date,Primary Type,Community Area\n".as_bytes(), span(), 77, "t")
            .unwrap();
        assert!(load.records.is_empty());
        assert_eq!(load.skipped, 0);
    }

    #[test]
    fn skips_bad_rows() {
        let csv = "Date,Primary Type,Community Area\n\
                   yesterday,THEFT,3\n\
                   01/15/2011 08:30:00 PM,THEFT,\n\
                   01/15/2011 08:30:00 PM,THEFT,0\n\
                   01/15/2011 08:30:00 PM,THEFT,78\n\
                   01/15/2011 08:30:00 PM,,5\n\
                   01/15/2010 08:30:00 PM,THEFT,5\n\
                   01/15/2011 08:30:00 PM,THEFT,5\n";
        let load = read_crimes(csv.as_bytes(), span(), 77, "t").unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.skipped, 6);
    }

    #[test]
    fn missing_column() {
        let err = read_crimes("Date,Type,Community Area\n".as_bytes(), span(), 77, "t")
            .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "Primary Type"));
    }

    #[test]
    fn district_fans_out() {
        let csv = "DISTRICT,COMMUNITY AREAS\n12,24;28;31\n";
        let t = read_layer(LayerKind::PoliceDistrict, csv.as_bytes(), 77, "t").unwrap();
        let ids: Vec<_> = t.rows.iter().map(|r| r.community.unwrap().get()).collect();
        assert_eq!(ids, vec![24, 28, 31]);
        assert!(t.rows.iter().all(|r| r.key == "12"));
    }

    #[test]
    fn library_visits_row() {
        let csv = "NAME,MONTH,VISITORS\nHarold Washington,2011-03,80214\n";
        let t = read_layer(LayerKind::LibraryVisits, csv.as_bytes(), 77, "t").unwrap();
        assert_eq!(t.rows[0].key, "Harold Washington");
        assert_eq!(t.rows[0].month, Some("2011-03".parse().unwrap()));
        assert_eq!(t.rows[0].value, Some(80214.0));
    }

    #[test]
    fn negative_act_rejected() {
        let csv = "SCHOOL ID,AVG ACT\n609674,-1\n";
        let err = read_layer(LayerKind::SchoolAct, csv.as_bytes(), 77, "t").unwrap_err();
        assert!(matches!(err, IngestError::UnknownValue { .. }));
    }

    #[test]
    fn out_of_range_layer_community_is_error() {
        let csv = "NAME,COMMUNITY AREA\nBranch,99\n";
        let err = read_layer(LayerKind::Library, csv.as_bytes(), 77, "t").unwrap_err();
        assert!(matches!(err, IngestError::UnknownCommunity { .. }));
        let csv = "NAME,COMMUNITY AREA\nBranch,\n";
        let t = read_layer(LayerKind::Library, csv.as_bytes(), 77, "t").unwrap();
        assert_eq!(t.skipped, 1);
    }

    #[test]
    fn service_rows() {
        let csv = "TYPE,COMMUNITY AREA,MONTH,COUNT\nPot Holes,5,2012-07,14\n";
        let t = read_layer(LayerKind::Service311, csv.as_bytes(), 77, "t").unwrap();
        assert_eq!(t.rows[0].community.unwrap().get(), 5);
        assert_eq!(t.rows[0].value, Some(14.0));
    }
}
