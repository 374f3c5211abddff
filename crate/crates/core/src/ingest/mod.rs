//! Loading the city open-data layers and aggregating them into monthly
//! per-community counts.
//!
//! Every layer is keyed by community area. Event-like layers (crimes,
//! library visits, 311 requests) are bucketed by calendar month; static
//! layers (schools, police stations) are replicated across the whole span.

mod aggregate;
mod bundle;
mod load;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::month::{MonthRange, YearMonth};

pub use aggregate::{aggregate_monthly, Aggregated};
pub use bundle::{read_bundle, write_bundle, BUNDLE_FORMAT_VERSION};
pub use load::{load_crimes, load_layer, read_crimes, read_layer, CrimeLoad};
pub use synth::{generate_synthetic, GroundTruth, SynthPlan};

/// Number of community areas in the City of Chicago.
pub const CHICAGO_COMMUNITIES: usize = 77;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
    #[error("{context}: missing required column `{column}`")]
    MissingColumn { context: String, column: String },
    #[error("{context} line {line}: community `{value}` outside 1..={max}")]
    UnknownCommunity {
        context: String,
        line: u64,
        value: String,
        max: usize,
    },
    #[error("{context} line {line}: invalid value `{value}` in column `{column}`")]
    UnknownValue {
        context: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("invalid synthetic plan: {0}")]
    InvalidPlan(String),
    #[error("cube bundle: {0}")]
    Bundle(String),
}

/// One-based community area id, valid in `1..=n_communities`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommunityId(u16);

impl CommunityId {
    pub fn new(id: usize, n_communities: usize) -> Option<Self> {
        (1..=n_communities).contains(&id).then_some(Self(id as u16))
    }

    /// Builds from a zero-based index.
    pub fn from_index(idx: usize) -> Self {
        Self(idx as u16 + 1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based position, for indexing dense arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all(n_communities: usize) -> impl Iterator<Item = CommunityId> {
        (0..n_communities).map(Self::from_index)
    }
}

impl fmt::Display for CommunityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrimeRecord {
    pub timestamp: NaiveDateTime,
    pub primary_type: String,
    pub community: CommunityId,
}

impl CrimeRecord {
    pub fn month(&self) -> YearMonth {
        use chrono::Datelike;
        YearMonth::new(self.timestamp.year(), self.timestamp.month()).expect("chrono month")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Library,
    LibraryVisits,
    School,
    SchoolAct,
    PoliceStation,
    PoliceDistrict,
    Service311,
    /// Community border pairs.
    Borders,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Library,
        LayerKind::LibraryVisits,
        LayerKind::School,
        LayerKind::SchoolAct,
        LayerKind::PoliceStation,
        LayerKind::PoliceDistrict,
        LayerKind::Service311,
        LayerKind::Borders,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Library => "library",
            LayerKind::LibraryVisits => "library_visits",
            LayerKind::School => "school",
            LayerKind::SchoolAct => "school_act",
            LayerKind::PoliceStation => "police_station",
            LayerKind::PoliceDistrict => "police_district",
            LayerKind::Service311 => "service311",
            LayerKind::Borders => "borders",
        }
    }

    /// Required CSV header names, case-sensitive.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            LayerKind::Library => &["NAME", "COMMUNITY AREA"],
            LayerKind::LibraryVisits => &["NAME", "MONTH", "VISITORS"],
            LayerKind::School => &["SCHOOL ID", "COMMUNITY AREA"],
            LayerKind::SchoolAct => &["SCHOOL ID", "AVG ACT"],
            LayerKind::PoliceStation => &["DISTRICT"],
            LayerKind::PoliceDistrict => &["DISTRICT", "COMMUNITY AREAS"],
            LayerKind::Service311 => &["TYPE", "COMMUNITY AREA", "MONTH", "COUNT"],
            LayerKind::Borders => &["COMMUNITY AREA", "NEIGHBOR AREA"],
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One parsed layer row. `key` names the entity (library name, school id,
/// police district, 311 request type, or the neighbor area for borders).
/// Kinds without a community column (visits, ACT scores, stations) resolve
/// their community by joining on `key` during aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub key: String,
    pub community: Option<CommunityId>,
    pub month: Option<YearMonth>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTable {
    pub kind: LayerKind,
    pub rows: Vec<LayerRow>,
    /// Rows dropped because they could not be parsed or resolved.
    pub skipped: usize,
}

/// Dense, lexicographically ordered crime-type labels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CrimeTypeRegistry {
    labels: Vec<String>,
}

impl CrimeTypeRegistry {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        Self {
            labels: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Library {
    pub name: String,
    pub community: CommunityId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct School {
    pub id: String,
    pub community: CommunityId,
    /// Average ACT score; schools without one get no community edge.
    pub act: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliceStation {
    pub district: String,
    /// Communities inside the station's district.
    pub communities: Vec<CommunityId>,
}

/// Monthly event counts for every layer, indexed by (month, community, entity).
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyCube {
    pub span: MonthRange,
    pub n_communities: usize,
    pub crime_types: CrimeTypeRegistry,
    pub libraries: Vec<Library>,
    pub request_types: Vec<String>,
    pub schools: Vec<School>,
    pub police: Vec<PoliceStation>,
    crime_counts: Vec<u32>,
    library_visits: Vec<u64>,
    service_calls: Vec<u64>,
    adjacency: Vec<bool>,
}

impl MonthlyCube {
    /// All-zero cube with the given entity tables and no borders.
    pub fn new(
        span: MonthRange,
        n_communities: usize,
        crime_types: CrimeTypeRegistry,
        libraries: Vec<Library>,
        request_types: Vec<String>,
        schools: Vec<School>,
        police: Vec<PoliceStation>,
    ) -> Self {
        let months = span.len();
        Self {
            crime_counts: vec![0; months * n_communities * crime_types.len()],
            library_visits: vec![0; months * libraries.len()],
            service_calls: vec![0; months * n_communities * request_types.len()],
            adjacency: vec![false; n_communities * n_communities],
            span,
            n_communities,
            crime_types,
            libraries,
            request_types,
            schools,
            police,
        }
    }

    pub fn n_months(&self) -> usize {
        self.span.len()
    }

    pub fn n_types(&self) -> usize {
        self.crime_types.len()
    }

    pub fn communities(&self) -> impl Iterator<Item = CommunityId> {
        CommunityId::all(self.n_communities)
    }

    fn crime_idx(&self, month: usize, c: CommunityId, t: usize) -> usize {
        debug_assert!(month < self.n_months() && t < self.n_types());
        (month * self.n_communities + c.index()) * self.n_types() + t
    }

    pub fn crime_count(&self, month: usize, c: CommunityId, t: usize) -> u32 {
        self.crime_counts[self.crime_idx(month, c, t)]
    }

    pub fn set_crime_count(&mut self, month: usize, c: CommunityId, t: usize, count: u32) {
        let i = self.crime_idx(month, c, t);
        self.crime_counts[i] = count;
    }

    pub fn add_crime(&mut self, month: usize, c: CommunityId, t: usize) {
        let i = self.crime_idx(month, c, t);
        self.crime_counts[i] += 1;
    }

    /// Counts of every crime type for one community and month.
    pub fn crime_vector(&self, month: usize, c: CommunityId) -> &[u32] {
        let start = self.crime_idx(month, c, 0);
        &self.crime_counts[start..start + self.n_types()]
    }

    pub fn library_visits(&self, month: usize, library: usize) -> u64 {
        self.library_visits[month * self.libraries.len() + library]
    }

    pub fn set_library_visits(&mut self, month: usize, library: usize, visits: u64) {
        let n = self.libraries.len();
        self.library_visits[month * n + library] = visits;
    }

    /// Visitors summed over all libraries located in `c`.
    pub fn community_library_visits(&self, month: usize, c: CommunityId) -> u64 {
        self.libraries
            .iter()
            .enumerate()
            .filter(|(_, l)| l.community == c)
            .map(|(i, _)| self.library_visits(month, i))
            .sum()
    }

    fn service_idx(&self, month: usize, c: CommunityId, r: usize) -> usize {
        (month * self.n_communities + c.index()) * self.request_types.len() + r
    }

    pub fn service_calls(&self, month: usize, c: CommunityId, r: usize) -> u64 {
        self.service_calls[self.service_idx(month, c, r)]
    }

    pub fn set_service_calls(&mut self, month: usize, c: CommunityId, r: usize, count: u64) {
        let i = self.service_idx(month, c, r);
        self.service_calls[i] = count;
    }

    /// All 311 requests registered in `c` during the month.
    pub fn community_service_calls(&self, month: usize, c: CommunityId) -> u64 {
        (0..self.request_types.len())
            .map(|r| self.service_calls(month, c, r))
            .sum()
    }

    pub fn school_count(&self, c: CommunityId) -> usize {
        self.schools.iter().filter(|s| s.community == c).count()
    }

    /// Marks a shared border; self-pairs are ignored.
    pub fn set_adjacent(&mut self, a: CommunityId, b: CommunityId) {
        if a == b {
            return;
        }
        let n = self.n_communities;
        self.adjacency[a.index() * n + b.index()] = true;
        self.adjacency[b.index() * n + a.index()] = true;
    }

    pub fn adjacent(&self, a: CommunityId, b: CommunityId) -> bool {
        self.adjacency[a.index() * self.n_communities + b.index()]
    }

    pub fn neighbors(&self, c: CommunityId) -> impl Iterator<Item = CommunityId> + '_ {
        self.communities().filter(move |&o| self.adjacent(c, o))
    }

    /// Border pairs `(a, b)` with `a < b`.
    pub fn border_pairs(&self) -> Vec<(CommunityId, CommunityId)> {
        let mut out = Vec::new();
        for a in self.communities() {
            for b in self.communities().filter(|&b| b > a) {
                if self.adjacent(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Stations each community is attached to, indexed by community.
    ///
    /// A community inside a station's district is attached to that station.
    /// A community covered by no district is attached to every station that
    /// covers one of its border neighbors.
    pub fn police_attachment(&self) -> Vec<Vec<usize>> {
        let mut attached = vec![Vec::new(); self.n_communities];
        for (p, station) in self.police.iter().enumerate() {
            for c in &station.communities {
                if !attached[c.index()].contains(&p) {
                    attached[c.index()].push(p);
                }
            }
        }
        let covered: Vec<bool> = attached.iter().map(|s| !s.is_empty()).collect();
        for c in self.communities() {
            if covered[c.index()] {
                continue;
            }
            let mut extra: Vec<usize> = Vec::new();
            for nb in self.neighbors(c).filter(|nb| covered[nb.index()]) {
                for &p in &attached[nb.index()] {
                    if !extra.contains(&p) {
                        extra.push(p);
                    }
                }
            }
            extra.sort_unstable();
            attached[c.index()] = extra;
        }
        for a in &mut attached {
            a.sort_unstable();
        }
        attached
    }

    /// Sum over all communities and months of `year` for crime type `t`.
    pub fn annual_type_total(&self, year: i32, t: usize) -> u64 {
        self.span
            .iter()
            .enumerate()
            .filter(|(_, m)| m.year() == year)
            .flat_map(|(i, _)| self.communities().map(move |c| (i, c)))
            .map(|(i, c)| self.crime_count(i, c, t) as u64)
            .sum()
    }
}
