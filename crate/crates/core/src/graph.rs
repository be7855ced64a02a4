//! City graphs: random grid generation and shortest-path routing.
//!
//! Nodes of a `d × d` lattice are numbered row-major, `id = row * d + col`.
//! Every edge joins two nodes at unit lattice distance; travel along an edge
//! takes one unit-mean exponential phase.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub type NodeId = usize;

/// Consecutive failed removal attempts after which edge removal stops.
pub const REMOVAL_RETRY_BUDGET: usize = 100;

/// An undirected edge stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub lo: NodeId,
    pub hi: NodeId,
}

impl Edge {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Edge { lo: a, hi: b }
        } else {
            Edge { lo: b, hi: a }
        }
    }
}

/// Connected, undirected subgraph of a square lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    side: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph on the `side × side` lattice from an edge list.
    ///
    /// Rejects self-loops, duplicate edges, edges that do not join lattice
    /// neighbours, and disconnected results.
    pub fn from_edges(side: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if side < 1 {
            return Err(Error::MalformedGraph("side length must be positive".into()));
        }
        let n = side * side;
        let mut list = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::MalformedGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::MalformedGraph(format!("self-loop at node {a}")));
            }
            let (ra, ca) = (a / side, a % side);
            let (rb, cb) = (b / side, b % side);
            if ra.abs_diff(rb) + ca.abs_diff(cb) != 1 {
                return Err(Error::MalformedGraph(format!(
                    "edge ({a}, {b}) does not join lattice neighbours"
                )));
            }
            list.push(Edge::new(a, b));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::MalformedGraph(format!(
                "duplicate edge ({}, {})",
                w[0].lo, w[0].hi
            )));
        }
        let graph = Self::assemble(side, list);
        if !graph.is_connected() {
            return Err(Error::MalformedGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    /// The complete `side × side` lattice with `2·side·(side−1)` edges.
    pub fn full_lattice(side: usize) -> Self {
        Self::assemble(side, lattice_edges(side))
    }

    fn assemble(side: usize, edges: Vec<Edge>) -> Self {
        let mut adjacency = vec![Vec::new(); side * side];
        for e in &edges {
            adjacency[e.lo].push(e.hi);
            adjacency[e.hi].push(e.lo);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Graph {
            side,
            edges,
            adjacency,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn node_count(&self) -> usize {
        self.side * self.side
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_pairs(&self) -> Vec<[NodeId; 2]> {
        self.edges.iter().map(|e| [e.lo, e.hi]).collect()
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node]
    }

    /// Breadth-first edge-count distances from `src`; `None` marks unreachable nodes.
    pub fn distances_from(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() == 0 || self.distances_from(0).iter().all(Option::is_some)
    }
}

fn lattice_edges(side: usize) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(2 * side * side.saturating_sub(1));
    for r in 0..side {
        for c in 0..side {
            let id = r * side + c;
            if c + 1 < side {
                edges.push(Edge::new(id, id + 1));
            }
            if r + 1 < side {
                edges.push(Edge::new(id, id + side));
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Generates a random connected grid graph.
///
/// Starts from the full `d × d` lattice and removes uniformly chosen edges,
/// putting back any removal that disconnects the graph, until at least
/// `2d(d−1)·sparseness` edges are gone or [`REMOVAL_RETRY_BUDGET`]
/// consecutive attempts have failed.
pub fn generate_grid_graph(d: usize, sparseness: f64, seed: u64) -> Result<Graph> {
    if d < 2 {
        return Err(invalid(format!("grid side must be at least 2, got {d}")));
    }
    if !(sparseness > 0.0 && sparseness < 1.0) {
        return Err(invalid(format!(
            "sparseness must lie in (0, 1), got {sparseness}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = Graph::full_lattice(d);
    let target = graph.edges.len() as f64 * sparseness;
    let mut removed = 0usize;
    let mut failures = 0usize;
    while (removed as f64) < target && failures < REMOVAL_RETRY_BUDGET {
        let pick = rng.gen_range(0..graph.edges.len());
        let mut edges = graph.edges.clone();
        edges.remove(pick);
        let candidate = Graph::assemble(d, edges);
        if candidate.is_connected() {
            graph = candidate;
            removed += 1;
            failures = 0;
        } else {
            failures += 1;
        }
    }
    Ok(graph)
}

/// A route between two nodes as its node sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Number of edges, i.e. Erlang phases of the travel time.
    pub fn phases(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.nodes.windows(2).map(|w| Edge::new(w[0], w[1])).collect()
    }
}

/// How ties among equally short paths are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lexicographically smallest node sequence.
    #[default]
    Lexicographic,
    /// Uniform choice among shortest next hops, seeded.
    Seeded(u64),
}

/// Minimum-edge-count path from `src` to `dst`, lexicographically smallest among ties.
pub fn shortest_path(g: &Graph, src: NodeId, dst: NodeId) -> Result<Path> {
    let dist = distances_to(g, src, dst)?;
    walk_down(g, src, &dist, |candidates| candidates[0])
}

/// Shortest path using the given tie-breaking rule.
pub fn shortest_path_with(g: &Graph, src: NodeId, dst: NodeId, ties: TieBreak) -> Result<Path> {
    match ties {
        TieBreak::Lexicographic => shortest_path(g, src, dst),
        TieBreak::Seeded(seed) => {
            let dist = distances_to(g, src, dst)?;
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ ((src as u64) << 32 | dst as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            walk_down(g, src, &dist, |candidates| *candidates.choose(&mut rng).unwrap())
        }
    }
}

fn distances_to(g: &Graph, src: NodeId, dst: NodeId) -> Result<Vec<Option<usize>>> {
    let n = g.node_count();
    if src >= n || dst >= n {
        return Err(invalid(format!("node out of range: ({src}, {dst}) with {n} nodes")));
    }
    let dist = g.distances_from(dst);
    if dist[src].is_none() {
        return Err(Error::MalformedGraph(format!("node {dst} unreachable from {src}")));
    }
    Ok(dist)
}

fn walk_down(
    g: &Graph,
    src: NodeId,
    dist: &[Option<usize>],
    mut choose: impl FnMut(&[NodeId]) -> NodeId,
) -> Result<Path> {
    let mut nodes = vec![src];
    let mut here = src;
    let mut remaining = dist[src].unwrap();
    while remaining > 0 {
        // neighbours are sorted, so candidates[0] is the smallest id
        let candidates: Vec<NodeId> = g
            .neighbors(here)
            .iter()
            .copied()
            .filter(|&v| dist[v] == Some(remaining - 1))
            .collect();
        here = choose(&candidates);
        nodes.push(here);
        remaining -= 1;
    }
    Ok(Path { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_lattice_edge_count() {
        for d in 2..8 {
            assert_eq!(Graph::full_lattice(d).edges().len(), 2 * d * (d - 1));
        }
    }

    #[test]
    fn tiny_sparseness_keeps_full_2x2() {
        let g = generate_grid_graph(2, 1e-9, 7).unwrap();
        assert_eq!(g.node_count(), 4);
        // 4·1e-9 > 0 asks for one removal, which a 4-cycle allows
        assert!(g.edges().len() == 3 || g.edges().len() == 4);
        let g = Graph::full_lattice(2);
        assert_eq!(g.edges().len(), 4);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_grid_graph(1, 0.5, 0).is_err());
        assert!(generate_grid_graph(3, 0.0, 0).is_err());
        assert!(generate_grid_graph(3, 1.0, 0).is_err());
        assert!(generate_grid_graph(3, f64::NAN, 0).is_err());
    }

    #[test]
    fn from_edges_validation() {
        assert!(Graph::from_edges(2, &[(0, 1), (1, 3), (3, 2)]).is_ok());
        assert!(Graph::from_edges(2, &[(0, 0), (0, 1), (1, 3), (3, 2)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 1), (1, 0), (1, 3), (3, 2)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 3), (0, 1), (1, 3), (3, 2)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 1)]).is_err());
    }

    #[test]
    fn same_node_path_is_empty() {
        let g = Graph::full_lattice(3);
        let p = shortest_path(&g, 4, 4).unwrap();
        assert_eq!(p.phases(), 0);
        assert!(p.edges().is_empty());
    }

    #[test]
    fn opposite_corners_of_2x2() {
        let g = Graph::full_lattice(2);
        let p = shortest_path(&g, 0, 3).unwrap();
        assert_eq!(p.phases(), 2);
        // lexicographic tie-break goes through node 1, not node 2
        assert_eq!(p.nodes(), &[0, 1, 3]);
    }

    #[test]
    fn seeded_tie_break_is_shortest_and_deterministic() {
        let g = Graph::full_lattice(5);
        for seed in 0..20 {
            let a = shortest_path_with(&g, 0, 24, TieBreak::Seeded(seed)).unwrap();
            let b = shortest_path_with(&g, 0, 24, TieBreak::Seeded(seed)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.phases(), 8);
        }
    }

    #[test]
    fn unreachable_node_is_reported() {
        // bypass validation to build a disconnected graph
        let g = Graph::assemble(2, vec![Edge::new(0, 1)]);
        assert!(matches!(shortest_path(&g, 0, 3), Err(Error::MalformedGraph(_))));
    }
}
