//! Snapshot-sequenced graphs over a fixed vertex universe.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use crate::error::{Result, TnaError};
use crate::tensor::{CsrMatrix, Matrix};

/// Unordered vertex pair stored as `(min, max)`.
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// One undirected, unweighted graph state. Edges are kept sorted and
/// deduplicated; self-loops are never stored.
#[derive(Debug)]
pub struct Snapshot {
    vertex_count: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    normalized: OnceLock<Arc<CsrMatrix>>,
}

impl Clone for Snapshot {
    fn clone(&self) -> Self {
        Snapshot {
            vertex_count: self.vertex_count,
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
            normalized: self.normalized.clone(),
        }
    }
}

impl PartialEq for Snapshot {
    fn eq(&self, other: &Self) -> bool {
        self.vertex_count == other.vertex_count && self.edges == other.edges
    }
}

impl Snapshot {
    pub fn new(vertex_count: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(TnaError::contract(format!("self-loop on vertex {i}")));
            }
            if i >= vertex_count || j >= vertex_count {
                return Err(TnaError::contract(format!(
                    "edge ({i}, {j}) outside a universe of {vertex_count} vertices"
                )));
            }
            set.insert(canonical(i, j));
        }
        Ok(Self::from_sorted(vertex_count, set.into_iter().collect()))
    }

    /// `edges` must already be canonical, sorted and unique.
    pub(crate) fn from_sorted(vertex_count: usize, edges: Vec<Edge>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        let mut neighbors = vec![Vec::new(); vertex_count];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Snapshot {
            vertex_count,
            edges,
            neighbors,
            normalized: OnceLock::new(),
        }
    }

    pub fn empty(vertex_count: usize) -> Self {
        Self::from_sorted(vertex_count, Vec::new())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Number of unordered vertex pairs with no edge.
    pub fn non_edge_count(&self) -> usize {
        let n = self.vertex_count;
        n * n.saturating_sub(1) / 2 - self.edges.len()
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` in sparse form, computed once and cached.
    pub fn normalized_adjacency(&self) -> Arc<CsrMatrix> {
        self.normalized
            .get_or_init(|| Arc::new(self.build_normalized()))
            .clone()
    }

    fn build_normalized(&self) -> CsrMatrix {
        let deg: Vec<f64> = (0..self.vertex_count)
            .map(|v| (self.degree(v) + 1) as f64)
            .collect();
        let rows = (0..self.vertex_count)
            .map(|i| {
                let mut cols: Vec<usize> = self.neighbors[i].clone();
                let pos = cols.partition_point(|&c| c < i);
                cols.insert(pos, i);
                cols.into_iter()
                    .map(|j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(self.vertex_count, rows)
    }

    /// Dense `|V|×|V|` adjacency with ones on the diagonal.
    pub fn adjacency_with_self_loops(&self) -> Matrix {
        let mut a = Matrix::identity(self.vertex_count);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }
}

/// Dense normalised adjacency `D^{-1/2}(A+I)D^{-1/2}`, `D` the degree
/// matrix of `A+I`.
pub fn normalize_adjacency(s: &Snapshot) -> Matrix {
    s.normalized_adjacency().to_dense()
}

/// Layer-0 features: the `|V|×|V|` identity.
pub fn identity_features(s: &Snapshot) -> Matrix {
    Matrix::identity(s.vertex_count())
}

/// Ordered snapshots `G_1..G_T` sharing one vertex universe.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    snapshots: Vec<Arc<Snapshot>>,
    granularity: String,
}

impl TemporalGraph {
    pub fn new(snapshots: Vec<Snapshot>, granularity: impl Into<String>) -> Result<Self> {
        Self::from_shared(snapshots.into_iter().map(Arc::new).collect(), granularity)
    }

    pub fn from_shared(
        snapshots: Vec<Arc<Snapshot>>,
        granularity: impl Into<String>,
    ) -> Result<Self> {
        let granularity = granularity.into();
        if granularity.is_empty() || granularity.chars().any(char::is_whitespace) {
            return Err(TnaError::contract(format!(
                "granularity label {granularity:?} must be a non-empty single token"
            )));
        }
        if let Some(first) = snapshots.first() {
            let n = first.vertex_count();
            if let Some(bad) = snapshots.iter().position(|s| s.vertex_count() != n) {
                return Err(TnaError::contract(format!(
                    "snapshot {} has {} vertices, expected {n}",
                    bad + 1,
                    snapshots[bad].vertex_count()
                )));
            }
        }
        Ok(TemporalGraph {
            snapshots,
            granularity,
        })
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.vertex_count())
    }

    pub fn granularity(&self) -> &str {
        &self.granularity
    }

    /// Snapshot `G_t`, 1-based.
    pub fn snapshot(&self, t: usize) -> Result<&Arc<Snapshot>> {
        if t == 0 || t > self.len() {
            return Err(TnaError::contract(format!(
                "snapshot index {t} outside 1..={}",
                self.len()
            )));
        }
        Ok(&self.snapshots[t - 1])
    }

    pub fn snapshots(&self) -> &[Arc<Snapshot>] {
        &self.snapshots
    }

    /// The first `t` snapshots as a new sequence.
    pub fn prefix(&self, t: usize) -> Result<TemporalGraph> {
        if t > self.len() {
            return Err(TnaError::contract(format!(
                "prefix of length {t} from a sequence of {}",
                self.len()
            )));
        }
        Ok(TemporalGraph {
            snapshots: self.snapshots[..t].to_vec(),
            granularity: self.granularity.clone(),
        })
    }

    /// `E_t \ E_{t-1}` for `2 <= t <= T`.
    pub fn new_edges(&self, t: usize) -> Result<Vec<Edge>> {
        if t < 2 || t > self.len() {
            return Err(TnaError::contract(format!(
                "new edges need 2 <= t <= {}, got {t}",
                self.len()
            )));
        }
        Ok(edge_difference(
            &self.snapshots[t - 1],
            &self.snapshots[t - 2],
        ))
    }
}

/// Edges of `a` absent from `b`, in sorted order.
pub fn edge_difference(a: &Snapshot, b: &Snapshot) -> Vec<Edge> {
    let mut out = Vec::new();
    let mut other = b.edges().iter().peekable();
    for e in a.edges() {
        while other.peek().is_some_and(|o| *o < e) {
            other.next();
        }
        if other.peek() != Some(&e) {
            out.push(*e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vertex_normalizes_to_one() {
        let s = Snapshot::empty(1);
        assert_eq!(normalize_adjacency(&s), Matrix::from_rows(&[&[1.0]]));
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let s = Snapshot::new(2, [(0, 1)]).unwrap();
        assert_eq!(
            normalize_adjacency(&s),
            Matrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]])
        );
    }

    #[test]
    fn path_graph_entries() {
        let s = Snapshot::new(3, [(0, 1), (1, 2)]).unwrap();
        let a = normalize_adjacency(&s);
        assert!((a.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.max_abs_diff(&a.transpose()), 0.0);
    }

    #[test]
    fn isolated_vertex_row_is_identity_row() {
        let s = Snapshot::new(4, [(0, 1), (1, 2)]).unwrap();
        let a = normalize_adjacency(&s);
        assert_eq!(a.row(3), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_features_properties() {
        let s = Snapshot::new(3, [(0, 1)]).unwrap();
        let x = identity_features(&s);
        assert_eq!(x, Matrix::identity(3));
        for r in 0..3 {
            assert_eq!(x.row(r).iter().sum::<f64>(), 1.0);
        }
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(x.matmul(&w).unwrap(), w);
    }

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        assert!(Snapshot::new(3, [(1, 1)]).is_err());
        assert!(Snapshot::new(3, [(0, 3)]).is_err());
    }

    #[test]
    fn edges_are_unordered_and_deduplicated() {
        let s = Snapshot::new(3, [(2, 0), (0, 2), (1, 0)]).unwrap();
        assert_eq!(s.edges(), &[(0, 1), (0, 2)]);
        assert!(s.has_edge(2, 0));
        assert_eq!(s.non_edge_count(), 1);
    }

    #[test]
    fn new_edges_is_set_difference() {
        let g = TemporalGraph::new(
            vec![
                Snapshot::new(3, [(0, 1)]).unwrap(),
                Snapshot::new(3, [(0, 1), (1, 2)]).unwrap(),
                Snapshot::new(3, [(0, 1), (1, 2)]).unwrap(),
            ],
            "test",
        )
        .unwrap();
        assert_eq!(g.new_edges(2).unwrap(), vec![(1, 2)]);
        assert!(g.new_edges(3).unwrap().is_empty());
        assert!(g.new_edges(1).is_err());
        assert!(g.new_edges(4).is_err());
    }

    #[test]
    fn mixed_universes_rejected() {
        let r = TemporalGraph::new(vec![Snapshot::empty(2), Snapshot::empty(3)], "x");
        assert!(r.is_err());
    }
}
