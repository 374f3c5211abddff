//! Random-walk similarity between communities from the Laplacian
//! pseudoinverse, and the top-k neighbor lists derived from it.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::sig9;
use crate::ingest::CommunityId;
use crate::linalg::{pseudo_inverse, LinalgError};
use crate::netfuse::MultiLayerNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no similarity matrices to aggregate")]
    Empty,
    #[error("k = {k} needs more than {n} communities")]
    TooFewCommunities { k: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// `L⁺_ij / sqrt(L⁺_ii L⁺_jj)`.
    #[default]
    Cosine,
    /// `L⁺_ij` as is.
    Raw,
    /// Reciprocal commute time; zero across components and on the diagonal.
    InverseCommute,
}

impl SimilarityKind {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::Raw => "raw",
            SimilarityKind::InverseCommute => "inverse_commute",
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(SimilarityKind::Cosine),
            "raw" => Ok(SimilarityKind::Raw),
            "inverse_commute" | "inverse-commute" => Ok(SimilarityKind::InverseCommute),
            other => Err(format!("unknown similarity kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonthScope {
    Single(usize),
    /// Mean over this many monthly matrices.
    Aggregate(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunitySimilarity {
    pub matrix: DMatrix<f64>,
    pub scope: MonthScope,
}

impl CommunitySimilarity {
    pub fn n_communities(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, a: CommunityId, b: CommunityId) -> f64 {
        self.matrix[(a.index(), b.index())]
    }

    /// Header `community,1,..,n`, then one labeled row per community.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let n = self.n_communities();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["community".to_string()];
        header.extend((1..=n).map(|c| c.to_string()));
        out.write_record(&header)?;
        for i in 0..n {
            let mut row = vec![(i + 1).to_string()];
            row.extend((0..n).map(|j| sig9(self.matrix[(i, j)])));
            out.write_record(&row)?;
        }
        out.flush()
    }
}

/// `L = D − W` over every node of the network.
pub fn laplacian(net: &MultiLayerNetwork) -> DMatrix<f64> {
    let mut l = -net.adjacency_matrix();
    for i in 0..l.nrows() {
        let off: f64 = (0..l.ncols()).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -off;
    }
    l
}

/// Row-stochastic random-walk transitions; rows of isolated nodes are zero.
pub fn transition_matrix(net: &MultiLayerNetwork) -> DMatrix<f64> {
    let mut p = net.adjacency_matrix();
    for mut row in p.row_iter_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row /= total;
        }
    }
    p
}

/// Commute times `vol · (L⁺_ii + L⁺_jj − 2 L⁺_ij)` of a connected graph given
/// its Laplacian; `vol` is the sum of weighted degrees.
pub fn commute_times(l: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>, SimError> {
    let lp = pseudo_inverse(l, rank_tol)?;
    let vol = l.trace();
    let n = l.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            vol * (lp[(i, i)] + lp[(j, j)] - 2.0 * lp[(i, j)])
        }
    }))
}

/// Connected-component label of every node, counting positive-weight edges.
fn components(net: &MultiLayerNetwork) -> Vec<usize> {
    let n = net.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in net.edges.iter().filter(|e| e.weight > 0.0) {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Similarity between the network's communities, computed from the
/// pseudoinverse of the whole multi-layer Laplacian.
pub fn similarity_matrix(
    net: &MultiLayerNetwork,
    kind: SimilarityKind,
    rank_tol: f64,
) -> Result<CommunitySimilarity, SimError> {
    let l = laplacian(net);
    let lp = pseudo_inverse(&l, rank_tol)?;
    let n = net.n_communities;
    let degree = net.degrees();
    let isolated: Vec<bool> = degree[..n].iter().map(|&d| d <= 0.0).collect();

    let matrix = match kind {
        SimilarityKind::Raw => lp.view((0, 0), (n, n)).into_owned(),
        SimilarityKind::Cosine => {
            let diag: Vec<f64> = (0..n).map(|i| lp[(i, i)]).collect();
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if isolated[i] || isolated[j] || diag[i] <= 0.0 || diag[j] <= 0.0 {
                    0.0
                } else {
                    (lp[(i, j)] / (diag[i] * diag[j]).sqrt()).clamp(-1.0, 1.0)
                }
            })
        }
        SimilarityKind::InverseCommute => {
            let comp = components(net);
            let mut vol = vec![0.0; net.n_nodes()];
            for (i, d) in degree.iter().enumerate() {
                vol[comp[i]] += d;
            }
            DMatrix::from_fn(n, n, |i, j| {
                if i == j || isolated[i] || isolated[j] || comp[i] != comp[j] {
                    return 0.0;
                }
                let ct = vol[comp[i]] * (lp[(i, i)] + lp[(j, j)] - 2.0 * lp[(i, j)]);
                if ct > 0.0 {
                    1.0 / ct
                } else {
                    0.0
                }
            })
        }
    };
    // the pseudoinverse is exactly symmetric, and so is every formula above
    Ok(CommunitySimilarity {
        matrix,
        scope: MonthScope::Single(net.month),
    })
}

/// One similarity matrix per network, computed in parallel.
pub fn monthly_similarities(
    nets: &[MultiLayerNetwork],
    kind: SimilarityKind,
    rank_tol: f64,
) -> Result<Vec<CommunitySimilarity>, SimError> {
    nets.par_iter()
        .map(|net| similarity_matrix(net, kind, rank_tol))
        .collect()
}

/// Element-wise mean.
pub fn aggregate_similarities(
    matrices: &[CommunitySimilarity],
) -> Result<CommunitySimilarity, SimError> {
    let first = matrices.first().ok_or(SimError::Empty)?;
    let shape = first.matrix.shape();
    let mut sum = DMatrix::zeros(shape.0, shape.1);
    for m in matrices {
        if m.matrix.shape() != shape {
            return Err(SimError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                m.matrix.shape(),
                shape
            )));
        }
        sum += &m.matrix;
    }
    Ok(CommunitySimilarity {
        matrix: sum / matrices.len() as f64,
        scope: MonthScope::Aggregate(matrices.len()),
    })
}

/// The `k` communities other than `c` with the largest similarity to it,
/// best first; ties go to the lower id.
pub fn top_k_similar(
    m: &CommunitySimilarity,
    c: CommunityId,
    k: usize,
) -> Result<Vec<CommunityId>, SimError> {
    let n = m.n_communities();
    if k >= n {
        return Err(SimError::TooFewCommunities { k, n });
    }
    let row = m.matrix.row(c.index());
    let mut others: Vec<usize> = (0..n).filter(|&j| j != c.index()).collect();
    others.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    Ok(others[..k].iter().map(|&j| CommunityId::from_index(j)).collect())
}

/// The two most similar communities `(a, b)` of every community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKNeighbors {
    pairs: Vec<(CommunityId, CommunityId)>,
}

impl TopKNeighbors {
    pub fn from_similarity(m: &CommunitySimilarity) -> Result<Self, SimError> {
        let pairs = CommunityId::all(m.n_communities())
            .map(|c| top_k_similar(m, c, 2).map(|v| (v[0], v[1])))
            .collect::<Result<_, _>>()?;
        Ok(Self { pairs })
    }

    pub fn from_pairs(pairs: Vec<(CommunityId, CommunityId)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, c: CommunityId) -> (CommunityId, CommunityId) {
        self.pairs[c.index()]
    }

    /// `community,first,second` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["community", "first", "second"])?;
        for (i, (a, b)) in self.pairs.iter().enumerate() {
            out.write_record([(i + 1).to_string(), a.to_string(), b.to_string()])?;
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_RANK_TOL;
    use crate::netfuse::{Edge, EdgeFamily, Layer, NodeId, Variant};
    use proptest::prelude::*;

    /// Network whose first `n_comm` nodes are communities, the rest crime types.
    fn net(n_comm: usize, n_other: usize, edges: &[(usize, usize, f64)]) -> MultiLayerNetwork {
        let mut nodes: Vec<NodeId> = CommunityId::all(n_comm).map(NodeId::community).collect();
        nodes.extend((0..n_other).map(|index| NodeId {
            layer: Layer::CrimeType,
            index,
        }));
        MultiLayerNetwork {
            month: 0,
            variant: Variant::Full,
            nodes,
            edges: edges
                .iter()
                .map(|&(u, v, weight)| Edge {
                    u: u.min(v),
                    v: u.max(v),
                    weight,
                    family: EdgeFamily::CommunityBorder,
                })
                .collect(),
            n_communities: n_comm,
        }
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian(&net(2, 0, &[(0, 1, 1.0)]));
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let tri = laplacian(&net(3, 0, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]));
        assert_eq!(
            tri,
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0])
        );
        let iso = laplacian(&net(3, 0, &[(0, 1, 1.0)]));
        assert!(iso.row(2).iter().all(|&x| x == 0.0));
        assert!(iso.column(2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn transition_examples() {
        let p = transition_matrix(&net(3, 0, &[(0, 1, 1.0), (0, 2, 3.0)]));
        assert_eq!(p[(0, 1)], 0.25);
        assert_eq!(p[(0, 2)], 0.75);
        let p = transition_matrix(&net(3, 0, &[(0, 1, 1.0)]));
        assert!(p.row(2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_communities_are_anticorrelated() {
        let m = similarity_matrix(&net(2, 0, &[(0, 1, 1.0)]), SimilarityKind::Cosine, DEFAULT_RANK_TOL)
            .unwrap();
        assert!((m.matrix[(0, 1)] + 1.0).abs() < 1e-12);
        assert_eq!(m.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn isolated_community_row() {
        let m = similarity_matrix(&net(3, 0, &[(0, 1, 1.0)]), SimilarityKind::Cosine, DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(m.matrix.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn automorphism_swaps_rows() {
        // communities 0 and 1 both hang off hub 2; 3 hangs off 2 with a distinct weight
        let g = net(4, 1, &[(0, 4, 1.0), (1, 4, 1.0), (2, 4, 2.0), (3, 2, 1.0)]);
        let m = similarity_matrix(&g, SimilarityKind::Cosine, DEFAULT_RANK_TOL).unwrap().matrix;
        assert!((m[(0, 2)] - m[(1, 2)]).abs() < 1e-12);
        assert!((m[(0, 3)] - m[(1, 3)]).abs() < 1e-12);
    }

    #[test]
    fn path_commute_time() {
        let l = laplacian(&net(3, 0, &[(0, 1, 1.0), (1, 2, 1.0)]));
        let ct = commute_times(&l, DEFAULT_RANK_TOL).unwrap();
        assert!((ct[(0, 2)] - 8.0).abs() < 1e-12);
        let m = similarity_matrix(
            &net(3, 0, &[(0, 1, 1.0), (1, 2, 1.0)]),
            SimilarityKind::InverseCommute,
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        assert!((m.matrix[(0, 2)] - 0.125).abs() < 1e-12);
        assert!((m.matrix[(0, 1)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn inverse_commute_zero_across_components() {
        let m = similarity_matrix(
            &net(4, 0, &[(0, 1, 1.0), (2, 3, 1.0)]),
            SimilarityKind::InverseCommute,
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        assert_eq!(m.matrix[(0, 2)], 0.0);
        assert!(m.matrix[(0, 1)] > 0.0);
    }

    fn sim(rows: &[&[f64]]) -> CommunitySimilarity {
        let n = rows.len();
        CommunitySimilarity {
            matrix: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
            scope: MonthScope::Single(0),
        }
    }

    #[test]
    fn top_k_ordering_and_ties() {
        let m = sim(&[
            &[1.0, 0.3, 0.9, 0.5],
            &[0.3, 1.0, 0.0, 0.0],
            &[0.9, 0.0, 1.0, 0.0],
            &[0.5, 0.0, 0.0, 1.0],
        ]);
        let c = |i| CommunityId::from_index(i);
        assert_eq!(top_k_similar(&m, c(0), 2).unwrap(), vec![c(2), c(3)]);
        // all off-diagonal of row 1 except community 0 are zero: ties → lowest ids
        assert_eq!(top_k_similar(&m, c(2), 2).unwrap(), vec![c(0), c(1)]);
        let mut row = vec![0.1; 10];
        row[3] = 0.9;
        row[8] = 0.9;
        let mut mat = DMatrix::from_element(10, 10, 0.1);
        mat.set_row(0, &nalgebra::RowDVector::from_vec(row));
        let m = CommunitySimilarity {
            matrix: mat,
            scope: MonthScope::Single(0),
        };
        assert_eq!(top_k_similar(&m, c(0), 2).unwrap(), vec![c(3), c(8)]);
        let flat = CommunitySimilarity {
            matrix: DMatrix::from_element(5, 5, 0.2),
            scope: MonthScope::Single(0),
        };
        assert_eq!(top_k_similar(&flat, c(3), 2).unwrap(), vec![c(0), c(1)]);
        assert!(top_k_similar(&flat, c(0), 5).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let m = sim(&[&[1.0, 0.4], &[0.4, 1.0]]);
        assert_eq!(aggregate_similarities(std::slice::from_ref(&m)).unwrap().matrix, m.matrix);
        // negated off-diagonal, diagonal kept at 1 as every similarity matrix has
        let neg = sim(&[&[1.0, -0.4], &[-0.4, 1.0]]);
        let agg = aggregate_similarities(&[m.clone(), neg]).unwrap();
        assert_eq!(agg.matrix, DMatrix::identity(2, 2));
        assert_eq!(agg.scope, MonthScope::Aggregate(2));
        let big = sim(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(matches!(
            aggregate_similarities(&[m, big]),
            Err(SimError::DimensionMismatch(_))
        ));
        assert_eq!(aggregate_similarities(&[]), Err(SimError::Empty));
    }

    #[test]
    fn csv_exports() {
        let m = sim(&[&[1.0, 0.25], &[0.25, 1.0]]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "community,1,2\n1,1,0.25\n2,0.25,1\n");
        let nb = TopKNeighbors::from_pairs(vec![(CommunityId::from_index(1), CommunityId::from_index(2))]);
        let mut buf = Vec::new();
        nb.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "community,first,second\n1,2,3\n");
    }

    fn random_network() -> impl Strategy<Value = MultiLayerNetwork> {
        (3usize..8, 0usize..5).prop_flat_map(|(nc, no)| {
            let n = nc + no;
            proptest::collection::vec(((0..n), (0..n), 0.05f64..2.0), 1..3 * n).prop_map(move |raw| {
                let edges: Vec<_> = raw
                    .into_iter()
                    .filter(|(u, v, _)| u != v)
                    .fold(Vec::new(), |mut acc: Vec<(usize, usize, f64)>, (u, v, w)| {
                        let key = (u.min(v), u.max(v));
                        if !acc.iter().any(|e| (e.0, e.1) == key) {
                            acc.push((key.0, key.1, w));
                        }
                        acc
                    });
                net(nc, no, &edges)
            })
        })
    }

    proptest! {
        #[test]
        fn cosine_is_bounded_symmetric_unit_diagonal(g in random_network()) {
            let m = similarity_matrix(&g, SimilarityKind::Cosine, DEFAULT_RANK_TOL).unwrap().matrix;
            prop_assert_eq!(&m, &m.transpose());
            for i in 0..m.nrows() {
                prop_assert_eq!(m[(i, i)], 1.0);
            }
            prop_assert!(m.iter().all(|x| (-1.0..=1.0).contains(x)));
        }

        #[test]
        fn transition_rows_sum_to_zero_or_one(g in random_network()) {
            let p = transition_matrix(&g);
            for row in p.row_iter() {
                let s: f64 = row.sum();
                prop_assert!(s.abs() < 1e-12 || (s - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn laplacian_rows_sum_to_zero(g in random_network()) {
            let l = laplacian(&g);
            prop_assert_eq!(&l, &l.transpose());
            for row in l.row_iter() {
                prop_assert!(row.sum().abs() < 1e-12);
            }
        }

        #[test]
        fn relabeling_other_nodes_keeps_similarity(g in random_network(), seed in any::<u64>()) {
            let nc = g.n_communities;
            let n = g.n_nodes();
            // rotate the non-community nodes
            let shift = if n > nc { (seed as usize) % (n - nc) } else { 0 };
            let map = |p: usize| if p < nc { p } else { nc + (p - nc + shift) % (n - nc) };
            let mut h = g.clone();
            for e in &mut h.edges {
                let (a, b) = (map(e.u), map(e.v));
                e.u = a.min(b);
                e.v = a.max(b);
            }
            let a = similarity_matrix(&g, SimilarityKind::Cosine, DEFAULT_RANK_TOL).unwrap().matrix;
            let b = similarity_matrix(&h, SimilarityKind::Cosine, DEFAULT_RANK_TOL).unwrap().matrix;
            prop_assert!((a - b).amax() < 1e-9);
        }

        #[test]
        fn top_k_invariant_under_monotone_maps(vals in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let n = 6;
            let m = CommunitySimilarity {
                matrix: DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { vals[i.min(j) * n + i.max(j)] }),
                scope: MonthScope::Single(0),
            };
            let t = CommunitySimilarity {
                matrix: m.matrix.map(|x| (3.0 * x).exp() - 2.0),
                scope: MonthScope::Single(0),
            };
            for c in CommunityId::all(n) {
                prop_assert_eq!(top_k_similar(&m, c, 2).unwrap(), top_k_similar(&t, c, 2).unwrap());
            }
        }
    }
}
