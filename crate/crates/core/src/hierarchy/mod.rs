//! Score tree: per-network leaf scores combined upward into one score.

pub mod snapshot;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::event::NetworkName;
use crate::ingest::IngestBatch;

pub use snapshot::{parse_snapshot, write_snapshot, ScoreEntry, ScoreSnapshot};
pub use tree::{Basis, Combiner, PresenceMode, ScoreNode, ScoringTree, TreeSpec};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("tree parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("tree has no node with id \"root\"")]
    MissingRoot,
    #[error("invalid node id {0:?}")]
    BadId(String),
    #[error("invalid option value {0:?}")]
    BadOption(String),
    #[error("node {0} declared twice")]
    DuplicateNode(String),
    #[error("node {parent} lists unknown child {child}")]
    UnknownChild { parent: String, child: String },
    #[error("node {0} has more than one parent or is part of a cycle")]
    NotATree(String),
    #[error("node {0} is not reachable from the root")]
    Unreachable(String),
    #[error("node {0}: a leaf needs a network and no children; an internal node needs children and no network")]
    BadShape(String),
    #[error("node {node}: network {network} is not in the registry")]
    UnknownNetwork { node: String, network: String },
    #[error("network {0} appears in more than one leaf")]
    DuplicateNetwork(String),
    #[error("node {node}: {count} weights for {children} children")]
    WeightCount {
        node: String,
        count: usize,
        children: usize,
    },
    #[error("node {0}: weights must be finite, non-negative and not all zero")]
    BadWeights(String),
    #[error("node {node}: no {basis} statistic for child {child}")]
    MissingStat {
        node: String,
        child: String,
        basis: &'static str,
    },
    #[error("model for {network} does not match the registry key layout")]
    LayoutMismatch { network: NetworkName },
    #[error("no leaf has a trained model")]
    EmptyTree,
    #[error("snapshot line {line}: {msg}")]
    Snapshot { line: usize, msg: String },
}

/// Leaf score `f.w / sum(w)`, or 0 when the weights sum to 0. With `f` in
/// `[0,1]` and `w >= 0` the result lies in `[0,1]`.
pub fn leaf_score(f: &[f64], w: &[f64]) -> f64 {
    assert_eq!(f.len(), w.len(), "feature/weight length mismatch");
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        return 0.0;
    }
    let dot: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
    (dot / s).clamp(0.0, 1.0)
}

/// `|f * w|_2 / |w|_2` with `*` element-wise. `None` when `w` is zero.
pub fn l2_combine(f: &[f64], w: &[f64]) -> Option<f64> {
    assert_eq!(f.len(), w.len(), "child/weight length mismatch");
    let mut nonzero = w.iter().enumerate().filter(|(_, &x)| x != 0.0);
    match (nonzero.next(), nonzero.next()) {
        (None, _) => return None,
        // One effective child: its score passes through unchanged.
        (Some((i, _)), None) => return Some(f[i].clamp(0.0, 1.0)),
        _ => {}
    }
    let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let num = f
        .iter()
        .zip(w)
        .map(|(a, b)| (a * b) * (a * b))
        .sum::<f64>()
        .sqrt();
    Some((num / wn).clamp(0.0, 1.0))
}

/// Size statistics used to weight the children of unsupervised nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NetworkStats {
    pub nodes: f64,
    pub edges: f64,
}

impl NetworkStats {
    pub fn avg_degree(&self) -> f64 {
        if self.nodes == 0.0 {
            0.0
        } else {
            self.edges / self.nodes
        }
    }

    pub fn combine(&self, other: &NetworkStats) -> NetworkStats {
        NetworkStats {
            nodes: self.nodes + other.nodes,
            edges: self.edges + other.edges,
        }
    }
}

/// Members per network, and as edges the distinct directed user pairs seen
/// either as graph edges or as reactor-to-author interactions.
pub fn network_stats(batch: &IngestBatch) -> BTreeMap<NetworkName, NetworkStats> {
    let mut links: BTreeMap<&NetworkName, BTreeSet<(&str, &str)>> = BTreeMap::new();
    for e in batch.all_events() {
        links
            .entry(&e.network)
            .or_default()
            .insert((e.actor.as_str(), e.author.as_str()));
    }
    for e in &batch.edges {
        links
            .entry(&e.network)
            .or_default()
            .insert((e.from.as_str(), e.to.as_str()));
    }
    batch
        .memberships()
        .into_iter()
        .map(|(net, users)| {
            let edges = links.get(&net).map_or(0, BTreeSet::len) as f64;
            let stats = NetworkStats {
                nodes: users.len() as f64,
                edges,
            };
            (net, stats)
        })
        .collect()
}

/// Weights proportional to the chosen statistic, scaled so the largest is 1.
pub fn heuristic_weights(basis: Basis, stats: &[NetworkStats]) -> Option<Vec<f64>> {
    let raw: Vec<f64> = stats
        .iter()
        .map(|s| match basis {
            Basis::GraphSize => s.nodes,
            Basis::AvgDegree => s.avg_degree(),
        })
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    (max > 0.0 && raw.iter().all(|x| x.is_finite())).then(|| raw.iter().map(|x| x / max).collect())
}
