//! Hospital networks: finite, simple, undirected, connected graphs with an
//! optional hub, plus the square Cartesian grid specialisations.
//!
//! Node ids are 1-based and dense. Grids are numbered row-major, so the cell
//! at `(row, col)` is `(row - 1) * n + col`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    /// Returns `None` for id 0.
    pub fn new(id: usize) -> Option<Self> {
        if id == 0 || id > u32::MAX as usize {
            None
        } else {
            Some(NodeId(id as u32))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based position in configuration vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn from_index(index: usize) -> Self {
        NodeId(index as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    VonNeumann,
    Moore,
}

impl Neighborhood {
    /// Number of neighbors of a bulk cell, which is also the threshold of
    /// every grid cell.
    pub fn nominal_size(self) -> u64 {
        match self {
            Neighborhood::VonNeumann => 4,
            Neighborhood::Moore => 8,
        }
    }

    fn offsets(self) -> &'static [(i64, i64)] {
        const VON_NEUMANN: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
        const MOORE: [(i64, i64); 8] = [
            (-1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
            (1, 0),
            (1, -1),
            (0, -1),
            (-1, -1),
        ];
        match self {
            Neighborhood::VonNeumann => &VON_NEUMANN,
            Neighborhood::Moore => &MOORE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub neighborhood: Neighborhood,
}

impl GridSpec {
    pub fn new(n: usize, neighborhood: Neighborhood) -> Self {
        GridSpec { n, neighborhood }
    }

    pub fn cell_count(&self) -> usize {
        self.n * self.n
    }

    /// Center cell, defined only for odd sides.
    pub fn center(&self) -> Option<NodeId> {
        if self.n % 2 == 1 {
            NodeId::new(self.cell_count().div_ceil(2))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("grid side must be at least 1")]
    EmptyGrid,
    #[error("grid side {0} is even, so there is no center cell to act as hub")]
    EvenSideWithHub(usize),
    #[error("cell ({row}, {col}) lies outside a {n}x{n} grid")]
    OutOfRange { n: usize, row: usize, col: usize },
    #[error("network must contain at least one node")]
    Empty,
    #[error("node {0} is not part of the network")]
    UnknownNode(usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("network is not connected: node {0} is unreachable from node 1")]
    Disconnected(usize),
    #[error("expected {expected} thresholds, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("threshold {threshold} at node {node} is below its degree {degree}")]
    ThresholdBelowDegree { node: usize, threshold: u64, degree: usize },
    #[error("threshold at node {0} must be at least 1")]
    ZeroThreshold(usize),
}

/// How a network was built. Grids keep their spec for rendering and index
/// arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Grid(GridSpec),
    Graph,
}

/// Immutable, validated network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    layout: Layout,
    hub: Option<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    thresholds: Vec<u64>,
    neighbors: Vec<Vec<NodeId>>,
    off_slots: Vec<u64>,
}

/// Row-major id of `(row, col)`, both 1-based.
pub fn index_of(spec: GridSpec, row: usize, col: usize) -> Result<NodeId, NetworkError> {
    let n = spec.n;
    if row == 0 || col == 0 || row > n || col > n {
        return Err(NetworkError::OutOfRange { n, row, col });
    }
    Ok(NodeId::from_index((row - 1) * n + (col - 1)))
}

/// Inverse of [`index_of`].
pub fn position_of(spec: GridSpec, id: NodeId) -> Result<(usize, usize), NetworkError> {
    if id.get() > spec.cell_count() {
        return Err(NetworkError::UnknownNode(id.get()));
    }
    let i = id.index();
    Ok((i / spec.n + 1, i % spec.n + 1))
}

/// Builds an `n x n` grid. The hub is the center cell when `n` is odd and
/// absent otherwise. Every cell, including boundary cells, gets the nominal
/// neighborhood size as threshold; missing off-grid neighbors are counted in
/// the cell's off-slots.
pub fn build_grid(spec: GridSpec) -> Result<Network, NetworkError> {
    if spec.n == 0 {
        return Err(NetworkError::EmptyGrid);
    }
    let n = spec.n as i64;
    let p = spec.cell_count();
    let nominal = spec.neighborhood.nominal_size();
    let mut neighbors = Vec::with_capacity(p);
    let mut edges = Vec::new();
    for i in 0..p {
        let (r, c) = ((i / spec.n) as i64, (i % spec.n) as i64);
        let mut list: Vec<NodeId> = spec
            .neighborhood
            .offsets()
            .iter()
            .filter_map(|&(dr, dc)| {
                let (rr, cc) = (r + dr, c + dc);
                (rr >= 0 && rr < n && cc >= 0 && cc < n)
                    .then(|| NodeId::from_index((rr * n + cc) as usize))
            })
            .collect();
        list.sort_unstable();
        let me = NodeId::from_index(i);
        edges.extend(list.iter().filter(|&&u| u > me).map(|&u| (me, u)));
        neighbors.push(list);
    }
    let off_slots = neighbors.iter().map(|l| nominal - l.len() as u64).collect();
    Ok(Network {
        layout: Layout::Grid(spec),
        hub: spec.center(),
        edges,
        thresholds: vec![nominal; p],
        neighbors,
        off_slots,
    })
}

/// Same as [`build_grid`] but fails when no center hub exists.
pub fn build_grid_with_hub(spec: GridSpec) -> Result<Network, NetworkError> {
    if spec.n > 0 && spec.n.is_multiple_of(2) {
        return Err(NetworkError::EvenSideWithHub(spec.n));
    }
    build_grid(spec)
}

/// Builds a general network on nodes `1..=p`. Thresholds default to the node
/// degrees; explicit thresholds must be at least the degree.
pub fn build_graph(
    p: usize,
    edges: &[(usize, usize)],
    hub: Option<usize>,
    thresholds: Option<&[u64]>,
) -> Result<Network, NetworkError> {
    if p == 0 {
        return Err(NetworkError::Empty);
    }
    let node = |id: usize| {
        if (1..=p).contains(&id) {
            Ok(NodeId::from_index(id - 1))
        } else {
            Err(NetworkError::UnknownNode(id))
        }
    };
    let hub = hub.map(node).transpose()?;

    let mut seen = BTreeSet::new();
    let mut neighbors = vec![Vec::new(); p];
    for &(u, v) in edges {
        let (a, b) = (node(u)?, node(v)?);
        if a == b {
            return Err(NetworkError::SelfLoop(u));
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            return Err(NetworkError::DuplicateEdge(key.0.get(), key.1.get()));
        }
        neighbors[a.index()].push(b);
        neighbors[b.index()].push(a);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }

    // BFS from node 1.
    let mut reached = vec![false; p];
    let mut queue = VecDeque::from([0usize]);
    reached[0] = true;
    while let Some(i) = queue.pop_front() {
        for u in &neighbors[i] {
            if !reached[u.index()] {
                reached[u.index()] = true;
                queue.push_back(u.index());
            }
        }
    }
    if let Some(i) = reached.iter().position(|&r| !r) {
        return Err(NetworkError::Disconnected(i + 1));
    }

    let thresholds: Vec<u64> = match thresholds {
        Some(t) if t.len() != p => {
            return Err(NetworkError::ThresholdCount { expected: p, got: t.len() })
        }
        Some(t) => t.to_vec(),
        None => neighbors.iter().map(|l| l.len() as u64).collect(),
    };
    for (i, (&t, list)) in thresholds.iter().zip(&neighbors).enumerate() {
        if t == 0 {
            return Err(NetworkError::ZeroThreshold(i + 1));
        }
        if t < list.len() as u64 {
            return Err(NetworkError::ThresholdBelowDegree {
                node: i + 1,
                threshold: t,
                degree: list.len(),
            });
        }
    }

    Ok(Network {
        layout: Layout::Graph,
        hub,
        edges: seen.into_iter().collect(),
        thresholds,
        neighbors,
        off_slots: vec![0; p],
    })
}

impl Network {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid_spec(&self) -> Option<GridSpec> {
        match self.layout {
            Layout::Grid(spec) => Some(spec),
            Layout::Graph => None,
        }
    }

    pub fn hub(&self) -> Option<NodeId> {
        self.hub
    }

    /// Edges as `(smaller, larger)` pairs, sorted.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).map(NodeId::from_index)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.get() <= self.len()
    }

    fn check(&self, v: NodeId) -> Result<usize, NetworkError> {
        if self.contains(v) {
            Ok(v.index())
        } else {
            Err(NetworkError::UnknownNode(v.get()))
        }
    }

    /// Sorted in-network neighbors of `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId], NetworkError> {
        self.check(v).map(|i| self.neighbors[i].as_slice())
    }

    pub fn degree(&self, v: NodeId) -> Result<usize, NetworkError> {
        self.check(v).map(|i| self.neighbors[i].len())
    }

    pub fn threshold(&self, v: NodeId) -> Result<u64, NetworkError> {
        self.check(v).map(|i| self.thresholds[i])
    }

    pub fn off_slots(&self, v: NodeId) -> Result<u64, NetworkError> {
        self.check(v).map(|i| self.off_slots[i])
    }

    pub fn thresholds(&self) -> &[u64] {
        &self.thresholds
    }

    /// Largest total load that still admits a stable configuration.
    pub fn total_capability(&self) -> u64 {
        self.thresholds.iter().map(|t| t - 1).sum()
    }

    pub(crate) fn neighbors_at(&self, i: usize) -> &[NodeId] {
        &self.neighbors[i]
    }

    pub(crate) fn threshold_at(&self, i: usize) -> u64 {
        self.thresholds[i]
    }

    pub(crate) fn off_slots_at(&self, i: usize) -> u64 {
        self.off_slots[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: usize) -> NodeId {
        NodeId::new(i).unwrap()
    }

    fn ids(list: &[usize]) -> Vec<NodeId> {
        list.iter().map(|&i| id(i)).collect()
    }

    #[test]
    fn von_neumann_3x3_center() {
        let net = build_grid(GridSpec::new(3, Neighborhood::VonNeumann)).unwrap();
        assert_eq!(net.hub(), Some(id(5)));
        assert_eq!(net.neighbors(id(5)).unwrap(), ids(&[2, 4, 6, 8]).as_slice());
        assert_eq!(net.threshold(id(5)).unwrap(), 4);
        assert_eq!(net.off_slots(id(5)).unwrap(), 0);
        // corner keeps the nominal threshold
        assert_eq!(net.threshold(id(1)).unwrap(), 4);
        assert_eq!(net.off_slots(id(1)).unwrap(), 2);
    }

    #[test]
    fn single_moore_cell() {
        let net = build_grid(GridSpec::new(1, Neighborhood::Moore)).unwrap();
        assert_eq!(net.len(), 1);
        assert!(net.neighbors(id(1)).unwrap().is_empty());
        assert_eq!(net.off_slots(id(1)).unwrap(), 8);
        assert_eq!(net.hub(), Some(id(1)));
    }

    #[test]
    fn moore_5x5_corner_and_center() {
        let net = build_grid(GridSpec::new(5, Neighborhood::Moore)).unwrap();
        assert_eq!(net.neighbors(id(1)).unwrap(), ids(&[2, 6, 7]).as_slice());
        assert_eq!(net.off_slots(id(1)).unwrap(), 5);
        assert_eq!(net.threshold(id(1)).unwrap(), 8);
        assert_eq!(
            net.neighbors(id(13)).unwrap(),
            ids(&[7, 8, 9, 12, 14, 17, 18, 19]).as_slice()
        );
        assert_eq!(net.hub(), Some(id(13)));
    }

    #[test]
    fn even_grid_has_no_hub() {
        let spec = GridSpec::new(4, Neighborhood::Moore);
        assert_eq!(build_grid(spec).unwrap().hub(), None);
        assert_eq!(build_grid_with_hub(spec), Err(NetworkError::EvenSideWithHub(4)));
        assert_eq!(build_grid(GridSpec::new(0, Neighborhood::Moore)), Err(NetworkError::EmptyGrid));
    }

    #[test]
    fn row_major_indexing() {
        let nine = GridSpec::new(9, Neighborhood::Moore);
        assert_eq!(index_of(nine, 5, 5).unwrap(), id(41));
        assert_eq!(index_of(nine, 1, 1).unwrap(), id(1));
        assert_eq!(index_of(GridSpec::new(5, Neighborhood::Moore), 3, 3).unwrap(), id(13));
        assert!(matches!(index_of(nine, 0, 3), Err(NetworkError::OutOfRange { .. })));
        assert!(matches!(index_of(nine, 3, 10), Err(NetworkError::OutOfRange { .. })));
        for r in 1..=9 {
            for c in 1..=9 {
                assert_eq!(position_of(nine, index_of(nine, r, c).unwrap()).unwrap(), (r, c));
            }
        }
    }

    #[test]
    fn graph_defaults_to_degree_thresholds() {
        let path = build_graph(3, &[(1, 2), (2, 3)], Some(2), None).unwrap();
        assert_eq!(path.thresholds(), &[1, 2, 1]);
        assert_eq!(path.hub(), Some(id(2)));

        let tri = build_graph(3, &[(1, 2), (2, 3), (1, 3)], None, Some(&[2, 2, 2])).unwrap();
        assert_eq!(tri.thresholds(), &[2, 2, 2]);

        let star = build_graph(5, &[(1, 2), (1, 3), (1, 4), (1, 5)], Some(1), None).unwrap();
        assert_eq!(star.thresholds(), &[4, 1, 1, 1, 1]);
        assert_eq!(star.off_slots(id(1)).unwrap(), 0);
    }

    #[test]
    fn graph_validation_errors() {
        assert_eq!(build_graph(2, &[(1, 1)], None, None), Err(NetworkError::SelfLoop(1)));
        assert_eq!(
            build_graph(2, &[(1, 2), (2, 1)], None, None),
            Err(NetworkError::DuplicateEdge(1, 2))
        );
        assert_eq!(build_graph(3, &[(1, 2)], None, None), Err(NetworkError::Disconnected(3)));
        assert_eq!(
            build_graph(3, &[(1, 2), (2, 3)], None, Some(&[1, 1, 1])),
            Err(NetworkError::ThresholdBelowDegree { node: 2, threshold: 1, degree: 2 })
        );
        assert_eq!(build_graph(2, &[(1, 3)], None, None), Err(NetworkError::UnknownNode(3)));
        assert_eq!(build_graph(2, &[(1, 2)], Some(7), None), Err(NetworkError::UnknownNode(7)));
        assert_eq!(build_graph(0, &[], None, None), Err(NetworkError::Empty));
        assert_eq!(build_graph(1, &[], None, None), Err(NetworkError::ZeroThreshold(1)));
    }

    #[test]
    fn unknown_node_queries() {
        let net = build_grid(GridSpec::new(3, Neighborhood::Moore)).unwrap();
        assert_eq!(net.neighbors(id(10)), Err(NetworkError::UnknownNode(10)));
        assert_eq!(net.degree(id(10)), Err(NetworkError::UnknownNode(10)));
    }

    #[test]
    fn grid_structure_invariants() {
        for n in 1..=7 {
            for hood in [Neighborhood::VonNeumann, Neighborhood::Moore] {
                let net = build_grid(GridSpec::new(n, hood)).unwrap();
                let mut degree_sum = 0;
                for v in net.nodes() {
                    let list = net.neighbors(v).unwrap();
                    degree_sum += list.len();
                    for &u in list {
                        assert!(net.neighbors(u).unwrap().contains(&v));
                    }
                    assert_eq!(
                        list.len() as u64 + net.off_slots(v).unwrap(),
                        hood.nominal_size()
                    );
                }
                assert_eq!(degree_sum, 2 * net.edges().len());
            }
        }
    }
}
