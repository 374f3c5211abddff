use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;

use super::{
    CommunityId, CrimeRecord, CrimeTypeRegistry, LayerKind, LayerTable, Library, MonthlyCube,
    PoliceStation, School,
};
use crate::month::MonthRange;

/// Aggregation output: the cube plus every degradation that was applied.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub cube: MonthlyCube,
    pub warnings: Vec<String>,
}

/// Buckets crimes and layer rows into a [`MonthlyCube`].
///
/// Missing layers degrade to zeros (or no entities) and add a warning.
/// When a kind is supplied more than once, only the first table is used.
/// Crime records outside `span` are ignored; the type registry is built from
/// the records inside it.
pub fn aggregate_monthly(
    crimes: &[CrimeRecord],
    layers: &[LayerTable],
    span: MonthRange,
    n_communities: usize,
) -> Aggregated {
    let mut warnings = Vec::new();
    let mut note = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };

    let mut by_kind: BTreeMap<LayerKind, &LayerTable> = BTreeMap::new();
    for t in layers {
        match by_kind.entry(t.kind) {
            std::collections::btree_map::Entry::Occupied(_) => {
                note(format!("duplicate {} table ignored", t.kind))
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(t);
            }
        }
    }
    for kind in LayerKind::ALL {
        if !by_kind.contains_key(&kind) {
            note(format!("no {kind} table supplied; layer treated as empty"));
        }
    }
    let rows = |kind: LayerKind| by_kind.get(&kind).map(|t| t.rows.as_slice()).unwrap_or(&[]);

    let in_span: Vec<&CrimeRecord> = crimes.iter().filter(|r| span.contains(r.month())).collect();
    let registry = CrimeTypeRegistry::from_labels(in_span.iter().map(|r| r.primary_type.as_str()));

    // Libraries: first location wins for duplicated names.
    let mut libraries: Vec<Library> = Vec::new();
    let mut lib_index: HashMap<String, usize> = HashMap::new();
    for row in rows(LayerKind::Library) {
        if let (Some(c), false) = (row.community, lib_index.contains_key(&row.key)) {
            lib_index.insert(row.key.clone(), libraries.len());
            libraries.push(Library {
                name: row.key.clone(),
                community: c,
            });
        }
    }

    let request_types: Vec<String> = rows(LayerKind::Service311)
        .iter()
        .map(|r| r.key.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let act: HashMap<&str, f64> = rows(LayerKind::SchoolAct)
        .iter()
        .filter_map(|r| r.value.map(|v| (r.key.as_str(), v)))
        .collect();
    let mut schools: Vec<School> = Vec::new();
    let mut seen_schools = BTreeSet::new();
    for row in rows(LayerKind::School) {
        if let Some(c) = row.community {
            if seen_schools.insert(row.key.clone()) {
                schools.push(School {
                    id: row.key.clone(),
                    community: c,
                    act: act.get(row.key.as_str()).copied(),
                });
            }
        }
    }

    let mut district_map: BTreeMap<&str, Vec<CommunityId>> = BTreeMap::new();
    for row in rows(LayerKind::PoliceDistrict) {
        if let Some(c) = row.community {
            let e = district_map.entry(row.key.as_str()).or_default();
            if !e.contains(&c) {
                e.push(c);
            }
        }
    }
    let mut districts: Vec<&str> = rows(LayerKind::PoliceStation)
        .iter()
        .map(|r| r.key.as_str())
        .collect();
    if districts.is_empty() && !district_map.is_empty() {
        note("no police stations listed; one station per mapped district assumed".into());
        districts = district_map.keys().copied().collect();
    }
    let mut seen_districts = BTreeSet::new();
    districts.retain(|d| seen_districts.insert(*d));
    let police: Vec<PoliceStation> = districts
        .iter()
        .map(|d| {
            let mut communities = district_map.get(d).cloned().unwrap_or_default();
            if communities.is_empty() {
                warn!("police district {d} has no mapped communities");
            }
            communities.sort_unstable();
            PoliceStation {
                district: d.to_string(),
                communities,
            }
        })
        .collect();

    let mut cube = MonthlyCube::new(
        span,
        n_communities,
        registry,
        libraries,
        request_types,
        schools,
        police,
    );

    for r in &in_span {
        let m = span.index_of(r.month()).expect("filtered to span");
        let t = cube
            .crime_types
            .index_of(&r.primary_type)
            .expect("registry built from records");
        cube.add_crime(m, r.community, t);
    }

    let mut unknown_libraries = 0usize;
    for row in rows(LayerKind::LibraryVisits) {
        let (Some(month), Some(v)) = (row.month, row.value) else {
            continue;
        };
        let Some(m) = span.index_of(month) else {
            continue;
        };
        match lib_index.get(&row.key) {
            Some(&l) => {
                let cur = cube.library_visits(m, l);
                cube.set_library_visits(m, l, cur + v.round() as u64);
            }
            None => unknown_libraries += 1,
        }
    }
    if unknown_libraries > 0 {
        note(format!(
            "{unknown_libraries} library visit rows name a library with no location; skipped"
        ));
    }

    for row in rows(LayerKind::Service311) {
        let (Some(c), Some(month), Some(v)) = (row.community, row.month, row.value) else {
            continue;
        };
        let Some(m) = span.index_of(month) else {
            continue;
        };
        let r = cube
            .request_types
            .binary_search(&row.key)
            .expect("request types built from rows");
        let cur = cube.service_calls(m, c, r);
        cube.set_service_calls(m, c, r, cur + v.round() as u64);
    }

    for row in rows(LayerKind::Borders) {
        let other = row.key.parse().ok().and_then(|id| CommunityId::new(id, n_communities));
        if let (Some(a), Some(b)) = (row.community, other) {
            cube.set_adjacent(a, b);
        }
    }

    Aggregated { cube, warnings }
}
