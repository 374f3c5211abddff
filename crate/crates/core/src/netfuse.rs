//! Monthly multi-layer community networks.
//!
//! Nodes are partitioned into layers (communities, crime types, schools,
//! police stations, libraries, 311 request types). Each edge family is
//! built from raw counts, then min-max normalized on its own before being
//! added to the graph.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::sig9;
use crate::ingest::{CommunityId, MonthlyCube};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("month index {month} outside cube span of {len} months")]
    MonthOutOfSpan { month: usize, len: usize },
    #[error("cannot normalize an empty edge family")]
    EmptyLayer,
    #[error("community {0} is not served by any police station")]
    UnmappedCommunity(CommunityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Community,
    CrimeType,
    School,
    Police,
    Library,
    RequestType,
}

impl Layer {
    pub fn name(self) -> &'static str {
        match self {
            Layer::Community => "community",
            Layer::CrimeType => "crime_type",
            Layer::School => "school",
            Layer::Police => "police",
            Layer::Library => "library",
            Layer::RequestType => "request_type",
        }
    }
}

/// A node: its layer and its index inside the layer. Community indices are
/// the one-based community ids; every other layer is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub layer: Layer,
    pub index: usize,
}

impl NodeId {
    pub fn community(c: CommunityId) -> Self {
        Self {
            layer: Layer::Community,
            index: c.get(),
        }
    }

    fn of(layer: Layer, index: usize) -> Self {
        Self { layer, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer.name(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    OnlyCrime,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Full, Variant::OnlyCrime];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::OnlyCrime => "only_crime",
        }
    }

    pub fn includes(self, layer: Layer) -> bool {
        match self {
            Variant::Full => true,
            Variant::OnlyCrime => matches!(layer, Layer::Community | Layer::CrimeType | Layer::Police),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Variant::Full),
            "only_crime" | "only-crime" => Ok(Variant::OnlyCrime),
            other => Err(format!("unknown network variant `{other}`")),
        }
    }
}

/// The seven edge families. Each is normalized independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeFamily {
    CommunityCrime,
    CommunityBorder,
    SchoolCommunity,
    PoliceCommunity,
    PoliceCrime,
    LibraryCommunity,
    RequestCommunity,
}

impl EdgeFamily {
    pub const ALL: [EdgeFamily; 7] = [
        EdgeFamily::CommunityCrime,
        EdgeFamily::CommunityBorder,
        EdgeFamily::SchoolCommunity,
        EdgeFamily::PoliceCommunity,
        EdgeFamily::PoliceCrime,
        EdgeFamily::LibraryCommunity,
        EdgeFamily::RequestCommunity,
    ];

    pub fn in_variant(self, variant: Variant) -> bool {
        match variant {
            Variant::Full => true,
            Variant::OnlyCrime => matches!(
                self,
                EdgeFamily::CommunityCrime
                    | EdgeFamily::CommunityBorder
                    | EdgeFamily::PoliceCommunity
                    | EdgeFamily::PoliceCrime
            ),
        }
    }
}

/// Undirected edge between node positions `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub family: EdgeFamily,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLayerNetwork {
    pub month: usize,
    pub variant: Variant,
    /// Communities occupy positions `0..n_communities`, in id order.
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub n_communities: usize,
}

impl MultiLayerNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == node)
    }

    /// Dense symmetric weighted adjacency matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut a = DMatrix::zeros(n, n);
        for e in &self.edges {
            a[(e.u, e.v)] += e.weight;
            a[(e.v, e.u)] += e.weight;
        }
        a
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_nodes()];
        for e in &self.edges {
            d[e.u] += e.weight;
            d[e.v] += e.weight;
        }
        d
    }

    pub fn family_weights(&self, family: EdgeFamily) -> Vec<f64> {
        self.edges
            .iter()
            .filter(|e| e.family == family)
            .map(|e| e.weight)
            .collect()
    }

    pub fn weight(&self, a: NodeId, b: NodeId) -> f64 {
        let (Some(pa), Some(pb)) = (self.position(a), self.position(b)) else {
            return 0.0;
        };
        let (u, v) = (pa.min(pb), pa.max(pb));
        self.edges
            .iter()
            .filter(|e| e.u == u && e.v == v)
            .map(|e| e.weight)
            .sum()
    }

    /// Writes `u_layer:u_index,v_layer:v_index,weight` lines.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.edges {
            writeln!(w, "{},{},{}", self.nodes[e.u], self.nodes[e.v], sig9(e.weight))?;
        }
        Ok(())
    }
}

/// Min-max normalization onto `[0, 1]`; a constant family maps to all ones.
pub fn minmax_normalize_layer(weights: &[f64]) -> Result<Vec<f64>, NetError> {
    let (lo, hi) = weights
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, &w| match acc {
            None => Some((w, w)),
            Some((lo, hi)) => Some((lo.min(w), hi.max(w))),
        })
        .ok_or(NetError::EmptyLayer)?;
    if hi == lo {
        return Ok(vec![1.0; weights.len()]);
    }
    Ok(weights.iter().map(|w| (w - lo) / (hi - lo)).collect())
}

/// Raw police-station/crime-type weights: crimes of each type summed over
/// the communities each station serves. Zero sums are omitted.
///
/// `attachment[c]` lists the stations serving community index `c`.
pub fn police_crime_weights(
    cube: &MonthlyCube,
    month: usize,
    attachment: &[Vec<usize>],
) -> Result<Vec<(usize, usize, f64)>, NetError> {
    if month >= cube.n_months() {
        return Err(NetError::MonthOutOfSpan {
            month,
            len: cube.n_months(),
        });
    }
    if let Some(c) = cube.communities().find(|c| attachment[c.index()].is_empty()) {
        return Err(NetError::UnmappedCommunity(c));
    }
    Ok(sum_police_crime(cube, month, attachment))
}

/// Station/type sums; communities without a station contribute nothing.
fn sum_police_crime(cube: &MonthlyCube, month: usize, attachment: &[Vec<usize>]) -> Vec<(usize, usize, f64)> {
    let n_types = cube.n_types();
    let n_stations = attachment
        .iter()
        .flatten()
        .map(|&p| p + 1)
        .max()
        .unwrap_or(0)
        .max(cube.police.len());
    let mut sums = vec![0u64; n_stations * n_types];
    for c in cube.communities() {
        let counts = cube.crime_vector(month, c);
        for &p in &attachment[c.index()] {
            for (t, &k) in counts.iter().enumerate() {
                sums[p * n_types + t] += k as u64;
            }
        }
    }
    sums.iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .map(|(i, &s)| (i / n_types, i % n_types, s as f64))
        .collect()
}

struct Builder {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
}

impl Builder {
    fn add_node(&mut self, node: NodeId) {
        self.index.insert(node, self.nodes.len());
        self.nodes.push(node);
    }

    fn add_family(&mut self, family: EdgeFamily, raw: Vec<(NodeId, NodeId, f64)>) {
        let raw: Vec<_> = raw.into_iter().filter(|(_, _, w)| *w > 0.0).collect();
        if raw.is_empty() {
            return;
        }
        let ws: Vec<f64> = raw.iter().map(|r| r.2).collect();
        let norm = minmax_normalize_layer(&ws).expect("non-empty family");
        for ((a, b, _), w) in raw.into_iter().zip(norm) {
            let (pa, pb) = (self.index[&a], self.index[&b]);
            self.edges.push(Edge {
                u: pa.min(pb),
                v: pa.max(pb),
                weight: w,
                family,
            });
        }
    }
}

/// Builds the network for one month of the cube.
///
/// Raw weights: crime counts (community–type), 1 per shared border, the
/// school's average ACT, 1 per police attachment, crimes per type summed over
/// a station's communities, library visitors, and 311 requests per type.
/// Zero raw weights produce no edge. A community no station reaches, even
/// through a neighbor, simply has no police edges.
pub fn build_network(
    cube: &MonthlyCube,
    month: usize,
    variant: Variant,
) -> Result<MultiLayerNetwork, NetError> {
    if month >= cube.n_months() {
        return Err(NetError::MonthOutOfSpan {
            month,
            len: cube.n_months(),
        });
    }
    let mut b = Builder {
        nodes: Vec::new(),
        index: HashMap::new(),
        edges: Vec::new(),
    };
    for c in cube.communities() {
        b.add_node(NodeId::community(c));
    }
    let layer_sizes = [
        (Layer::CrimeType, cube.n_types()),
        (Layer::School, cube.schools.len()),
        (Layer::Police, cube.police.len()),
        (Layer::Library, cube.libraries.len()),
        (Layer::RequestType, cube.request_types.len()),
    ];
    for (layer, size) in layer_sizes {
        if variant.includes(layer) {
            for i in 0..size {
                b.add_node(NodeId::of(layer, i));
            }
        }
    }

    let com = NodeId::community;
    let crime = |t| NodeId::of(Layer::CrimeType, t);
    let police = |p| NodeId::of(Layer::Police, p);

    let mut cc = Vec::new();
    for c in cube.communities() {
        for (t, &k) in cube.crime_vector(month, c).iter().enumerate() {
            cc.push((com(c), crime(t), k as f64));
        }
    }
    b.add_family(EdgeFamily::CommunityCrime, cc);

    let borders = cube
        .border_pairs()
        .into_iter()
        .map(|(x, y)| (com(x), com(y), 1.0))
        .collect();
    b.add_family(EdgeFamily::CommunityBorder, borders);

    if !cube.police.is_empty() {
        let attachment = cube.police_attachment();
        let mut pc = Vec::new();
        for c in cube.communities() {
            for &p in &attachment[c.index()] {
                pc.push((police(p), com(c), 1.0));
            }
        }
        b.add_family(EdgeFamily::PoliceCommunity, pc);
        let pt = sum_police_crime(cube, month, &attachment)
            .into_iter()
            .map(|(p, t, w)| (police(p), crime(t), w))
            .collect();
        b.add_family(EdgeFamily::PoliceCrime, pt);
    }

    if variant == Variant::Full {
        let sc = cube
            .schools
            .iter()
            .enumerate()
            .filter_map(|(s, school)| {
                school
                    .act
                    .map(|act| (NodeId::of(Layer::School, s), com(school.community), act))
            })
            .collect();
        b.add_family(EdgeFamily::SchoolCommunity, sc);

        let lc = cube
            .libraries
            .iter()
            .enumerate()
            .map(|(l, lib)| {
                (
                    NodeId::of(Layer::Library, l),
                    com(lib.community),
                    cube.library_visits(month, l) as f64,
                )
            })
            .collect();
        b.add_family(EdgeFamily::LibraryCommunity, lc);

        let mut rc = Vec::new();
        for c in cube.communities() {
            for r in 0..cube.request_types.len() {
                rc.push((
                    NodeId::of(Layer::RequestType, r),
                    com(c),
                    cube.service_calls(month, c, r) as f64,
                ));
            }
        }
        b.add_family(EdgeFamily::RequestCommunity, rc);
    }

    Ok(MultiLayerNetwork {
        month,
        variant,
        nodes: b.nodes,
        edges: b.edges,
        n_communities: cube.n_communities,
    })
}

/// Networks for every month of the span, built in parallel.
pub fn build_all_networks(
    cube: &MonthlyCube,
    variant: Variant,
) -> Result<Vec<MultiLayerNetwork>, NetError> {
    (0..cube.n_months())
        .into_par_iter()
        .map(|m| build_network(cube, m, variant))
        .collect()
}
