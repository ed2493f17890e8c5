//! Binary connectivity graphs at fixed wiring cost and their variability features.
//!
//! A graph at mean degree `d` keeps the `round(d * n / 2)` most coherent channel
//! pairs; ties are broken by `(i, j)` lexicographic order. Path lengths are
//! unweighted and measured within connected components only.

use std::collections::VecDeque;

use crate::data::BandName;
use crate::dsp::CoherenceMatrix;
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_COST_LEVELS: [f64; 4] = [6.0, 6.5, 7.0, 7.5];

/// Undirected simple graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    /// Sorted `(i, j)` pairs with `i < j`.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            if a.max(b) >= n_nodes {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) outside {n_nodes} nodes")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate edge {:?}", w[0])));
        }
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(a, b) in &list {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Ok(Graph {
            n_nodes,
            edges: list,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }
}

/// Number of edges realizing `target_mean_degree` on `n` nodes.
pub fn edge_count(target_mean_degree: f64, n: usize) -> usize {
    (target_mean_degree * n as f64 / 2.0).round() as usize
}

/// Keeps the most coherent pairs so that the mean degree hits the target.
pub fn build_graph(c: &CoherenceMatrix, target_mean_degree: f64) -> Result<Graph> {
    let n = c.n();
    if !(target_mean_degree > 0.0 && target_mean_degree < n as f64 - 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target mean degree {target_mean_degree} must lie in (0, {})",
            n as f64 - 1.0
        )));
    }
    let k = edge_count(target_mean_degree, n);
    let available = n * (n - 1) / 2;
    if k > available {
        return Err(Error::InvalidArgument(format!(
            "{k} edges requested but only {available} pairs exist"
        )));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(available);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    // `pairs` is already lexicographic, so a stable sort on coherence keeps that order within ties.
    pairs.sort_by(|&(a, b), &(x, y)| c.get(x, y).total_cmp(&c.get(a, b)));
    pairs.truncate(k);
    Graph::new(n, pairs)
}

pub fn node_degrees(g: &Graph) -> Vec<usize> {
    (0..g.n_nodes()).map(|v| g.neighbors(v).len()).collect()
}

/// Per-node average shortest-path length within its component.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeApls {
    /// `(node, apl)` for every node with at least one reachable peer, in node order.
    pub apl: Vec<(usize, f64)>,
    /// Nodes in singleton components.
    pub excluded: Vec<usize>,
}

impl NodeApls {
    pub fn values(&self) -> Vec<f64> {
        self.apl.iter().map(|&(_, v)| v).collect()
    }
}

pub fn node_apls(g: &Graph) -> NodeApls {
    let n = g.n_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut apl = Vec::new();
    let mut excluded = Vec::new();
    for src in 0..n {
        dist.fill(usize::MAX);
        dist[src] = 0;
        queue.clear();
        queue.push_back(src);
        let (mut total, mut reached) = (0usize, 0usize);
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    total += dist[u];
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        if reached == 0 {
            excluded.push(src);
        } else {
            apl.push((src, total as f64 / reached as f64));
        }
    }
    NodeApls { apl, excluded }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphVariabilityFeatures {
    pub band: BandName,
    /// `[std_apl, std_degree]` per cost level, in cost order.
    pub values: Vec<f64>,
}

/// Population std of the APL over non-isolated nodes and of the degree over
/// all nodes, for one graph. A graph with no edges has APL spread 0.
pub fn graph_spread(g: &Graph) -> (f64, f64) {
    let apls = node_apls(g).values();
    let std_apl = if apls.is_empty() { 0.0 } else { stats::pop_std(&apls) };
    let degrees: Vec<f64> = node_degrees(g).into_iter().map(|d| d as f64).collect();
    (std_apl, stats::pop_std(&degrees))
}

pub fn variability_features(c: &CoherenceMatrix, cost_levels: &[f64]) -> Result<GraphVariabilityFeatures> {
    let mut values = Vec::with_capacity(2 * cost_levels.len());
    for &cost in cost_levels {
        let (std_apl, std_degree) = graph_spread(&build_graph(c, cost)?);
        values.push(std_apl);
        values.push(std_degree);
    }
    Ok(GraphVariabilityFeatures { band: c.band, values })
}
