//! Problem instances: graph, stations, arrival rates and thresholds.

use std::path::Path as FsPath;

use rand::distributions::Open01;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{shortest_path_with, Edge, Graph, NodeId, TieBreak};

/// Relative tolerance used when checking derived fields of a loaded instance.
const LOAD_TOLERANCE: f64 = 1e-9;

/// Shortest routes from every station to every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Routes {
    /// `phases[i][j]`: edge count of the route from station `i` to node `j`.
    phases: Vec<Vec<u32>>,
    /// Sorted edge sets, same indexing.
    edges: Vec<Vec<Vec<Edge>>>,
}

impl Routes {
    fn build(graph: &Graph, stations: &[NodeId], ties: TieBreak) -> Result<Self> {
        let n = graph.node_count();
        let mut phases = Vec::with_capacity(stations.len());
        let mut edges = Vec::with_capacity(stations.len());
        for &s in stations {
            let mut ph = Vec::with_capacity(n);
            let mut es = Vec::with_capacity(n);
            for j in 0..n {
                let path = shortest_path_with(graph, s, j, ties)?;
                let mut e = path.edges();
                e.sort_unstable();
                ph.push(path.phases() as u32);
                es.push(e);
            }
            phases.push(ph);
            edges.push(es);
        }
        Ok(Routes { phases, edges })
    }

    pub fn phases(&self, station: usize, node: NodeId) -> u32 {
        self.phases[station][node]
    }

    pub fn edges(&self, station: usize, node: NodeId) -> &[Edge] {
        &self.edges[station][node]
    }

    /// Number of edges shared by the routes of two stations to `node`.
    pub fn shared(&self, a: usize, b: usize, node: NodeId) -> u32 {
        let (x, y) = (&self.edges[a][node], &self.edges[b][node]);
        let (mut i, mut k, mut c) = (0, 0, 0);
        while i < x.len() && k < y.len() {
            match x[i].cmp(&y[k]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    i += 1;
                    k += 1;
                }
            }
        }
        c
    }

    pub fn max_phases(&self) -> u32 {
        self.phases.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// A fully specified dispatching problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    graph: Graph,
    stations: Vec<NodeId>,
    capacities: Vec<u32>,
    lambdas: Vec<f64>,
    mu: f64,
    gamma: f64,
    t_star: f64,
    rho: f64,
    correlated: bool,
    outside_phases: u32,
    seed: u64,
    tie_break: TieBreak,
    routes: Routes,
}

/// Raw fields of an instance, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub d: usize,
    pub edges: Vec<[NodeId; 2]>,
    pub stations: Vec<NodeId>,
    pub lambdas: Vec<f64>,
    pub mu: f64,
    pub gamma: f64,
    pub t_star: f64,
    pub rho: f64,
    pub correlated: bool,
    pub outside_phases: u32,
    pub seed: u64,
    /// Trucks per station; omitted when every station has one truck.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<u32>>,
    /// Seed of the randomized shortest-path tie-break; omitted for lexicographic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_break_seed: Option<u64>,
}

fn field(field: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidInstance {
        field,
        message: message.into(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= LOAD_TOLERANCE * a.abs().max(b.abs()).max(1e-300)
}

impl Instance {
    /// Validates raw fields and precomputes station routes.
    pub fn from_file(file: InstanceFile) -> Result<Self> {
        let edges: Vec<(NodeId, NodeId)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = Graph::from_edges(file.d, &edges)?;
        let n = graph.node_count();
        if file.stations.is_empty() {
            return Err(field("stations", "at least one station is required"));
        }
        let mut seen = vec![false; n];
        for &s in &file.stations {
            if s >= n {
                return Err(field("stations", format!("node {s} outside 0..{n}")));
            }
            if std::mem::replace(&mut seen[s], true) {
                return Err(field("stations", format!("node {s} listed twice")));
            }
        }
        let capacities = file.capacities.unwrap_or_else(|| vec![1; file.stations.len()]);
        if capacities.len() != file.stations.len() {
            return Err(field("capacities", "length differs from station count"));
        }
        if capacities.iter().any(|&c| c == 0) {
            return Err(field("capacities", "every station needs at least one truck"));
        }
        if file.lambdas.len() != n {
            return Err(field(
                "lambdas",
                format!("expected {n} rates, found {}", file.lambdas.len()),
            ));
        }
        if file.lambdas.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(field("lambdas", "rates must be finite and nonnegative"));
        }
        if !(file.mu > 0.0) || !file.mu.is_finite() {
            return Err(field("mu", "service rate must be positive"));
        }
        if !(file.gamma > 0.0 && file.gamma <= 1.0) {
            return Err(field("gamma", "must lie in (0, 1]"));
        }
        if !(file.rho > 0.0) || !file.rho.is_finite() {
            return Err(field("rho", "load must be positive"));
        }
        let tie_break = file
            .tie_break_seed
            .map_or(TieBreak::Lexicographic, TieBreak::Seeded);
        let routes = Routes::build(&graph, &file.stations, tie_break)?;
        let max = routes.max_phases();
        if max == 0 {
            return Err(field("stations", "no node is reachable by a nonempty route"));
        }
        if !close(file.t_star, file.gamma * max as f64) {
            return Err(field(
                "t_star",
                format!("expected gamma × {max} = {}, found {}", file.gamma * max as f64, file.t_star),
            ));
        }
        if file.outside_phases != 2 * max {
            return Err(field(
                "outside_phases",
                format!("expected 2 × {max} = {}, found {}", 2 * max, file.outside_phases),
            ));
        }
        let total: f64 = file.lambdas.iter().sum();
        let trucks: u32 = capacities.iter().sum();
        if !close(total, file.rho * file.mu * trucks as f64) {
            return Err(field(
                "lambdas",
                format!(
                    "rates sum to {total}, expected rho × mu × trucks = {}",
                    file.rho * file.mu * trucks as f64
                ),
            ));
        }
        Ok(Instance {
            graph,
            stations: file.stations,
            capacities,
            lambdas: file.lambdas,
            mu: file.mu,
            gamma: file.gamma,
            t_star: file.t_star,
            rho: file.rho,
            correlated: file.correlated,
            outside_phases: file.outside_phases,
            seed: file.seed,
            tie_break,
            routes,
        })
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            d: self.graph.side(),
            edges: self.graph.edge_pairs(),
            stations: self.stations.clone(),
            lambdas: self.lambdas.clone(),
            mu: self.mu,
            gamma: self.gamma,
            t_star: self.t_star,
            rho: self.rho,
            correlated: self.correlated,
            outside_phases: self.outside_phases,
            seed: self.seed,
            capacities: self
                .capacities
                .iter()
                .any(|&c| c != 1)
                .then(|| self.capacities.clone()),
            tie_break_seed: match self.tie_break {
                TieBreak::Lexicographic => None,
                TieBreak::Seeded(s) => Some(s),
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Same instance with the correlation flag replaced.
    pub fn with_correlated(&self, correlated: bool) -> Self {
        Instance {
            correlated,
            ..self.clone()
        }
    }

    /// Same instance with a different station capacity vector.
    ///
    /// Arrival rates are rescaled to keep the load `rho`.
    pub fn with_capacities(&self, capacities: Vec<u32>) -> Result<Self> {
        let mut file = self.to_file();
        let old: u32 = self.capacities.iter().sum();
        let new: u32 = capacities.iter().sum();
        let scale = new as f64 / old as f64;
        for l in &mut file.lambdas {
            *l *= scale;
        }
        file.capacities = Some(capacities);
        Self::from_file(file)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn stations(&self) -> &[NodeId] {
        &self.stations
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn total_trucks(&self) -> u32 {
        self.capacities.iter().sum()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn total_lambda(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn correlated(&self) -> bool {
        self.correlated
    }

    pub fn outside_phases(&self) -> u32 {
        self.outside_phases
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    pub fn routes(&self) -> &Routes {
        &self.routes
    }

    /// Phase count from station index `i` (0-based) to node `j`.
    pub fn phases(&self, i: usize, j: NodeId) -> u32 {
        self.routes.phases(i, j)
    }

    /// Uniformization rate `Σλ + μ ΣC`.
    pub fn tau(&self) -> f64 {
        self.total_lambda() + self.mu * self.total_trucks() as f64
    }
}

/// Places stations and draws arrival rates on a graph.
///
/// Stations occupy `station_count` distinct uniformly chosen nodes, each with
/// one truck. Per-node weights are i.i.d. uniform on (0, 1) and scaled so the
/// rates sum to `rho · μ · I` with `μ = 1`. The same seed always yields the
/// same stations and rate profile, whatever `rho`, `gamma` or `correlated`.
pub fn generate_instance(
    g: &Graph,
    station_count: usize,
    rho: f64,
    gamma: f64,
    correlated: bool,
    seed: u64,
) -> Result<Instance> {
    generate_instance_with(g, station_count, rho, gamma, correlated, seed, TieBreak::Lexicographic)
}

/// [`generate_instance`] with an explicit shortest-path tie-break.
pub fn generate_instance_with(
    g: &Graph,
    station_count: usize,
    rho: f64,
    gamma: f64,
    correlated: bool,
    seed: u64,
    ties: TieBreak,
) -> Result<Instance> {
    let n = g.node_count();
    if station_count == 0 || station_count > n {
        return Err(invalid(format!(
            "station count must lie in 1..={n}, got {station_count}"
        )));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid(format!("load must be positive, got {rho}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let mu = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stations = index::sample(&mut rng, n, station_count).into_vec();
    let weights: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Open01)).collect();
    let total: f64 = weights.iter().sum();
    let target = rho * mu * station_count as f64;
    let lambdas: Vec<f64> = weights.iter().map(|w| w / total * target).collect();

    let routes = Routes::build(g, &stations, ties)?;
    let max = routes.max_phases();
    Ok(Instance {
        graph: g.clone(),
        capacities: vec![1; station_count],
        stations,
        lambdas,
        mu,
        gamma,
        t_star: gamma * max as f64,
        rho,
        correlated,
        outside_phases: 2 * max,
        seed,
        tie_break: ties,
        routes,
    })
}
