use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Deserialize;

use super::snapshot::{ScoreEntry, ScoreSnapshot};
use super::{heuristic_weights, l2_combine, leaf_score, HierarchyError, NetworkStats};
use crate::event::{is_dimension_name, NetworkName, UserId};
use crate::features::FeatureStore;
use crate::registry::FeatureRegistry;
use crate::training::WeightVector;

const DEFAULT_TREE: &str = include_str!("../../config/tree.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combiner {
    /// Weighted mean `f.w / sum(w)`; the leaf combiner.
    Dot,
    /// `|f * w|_2 / |w|_2`.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    GraphSize,
    AvgDegree,
}

impl Basis {
    fn name(self) -> &'static str {
        match self {
            Basis::GraphSize => "graph_size",
            Basis::AvgDegree => "avg_degree",
        }
    }
}

/// How internal nodes treat children the user has no presence in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PresenceMode {
    /// Absent children contribute a 0 entry.
    #[default]
    ZeroFill,
    /// Absent children are dropped and the remaining weights renormalized.
    PresentOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNode {
    pub id: String,
    pub level: usize,
    pub combiner: Combiner,
    /// Set on leaves only.
    pub network: Option<NetworkName>,
    pub children: Vec<ScoreNode>,
    pub basis: Basis,
    /// Explicit child weights; when absent they come from `basis`.
    pub weights: Option<Vec<f64>>,
}

impl ScoreNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a NetworkName>) {
        if let Some(n) = &self.network {
            out.push(n);
        }
        for c in &self.children {
            c.leaves(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub root: ScoreNode,
    pub presence: PresenceMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    #[serde(default)]
    presence: Option<String>,
    #[serde(default)]
    node: Vec<NodeFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: String,
    #[serde(default)]
    network: Option<String>,
    #[serde(default)]
    children: Vec<String>,
    #[serde(default)]
    combiner: Option<String>,
    #[serde(default)]
    basis: Option<String>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl TreeSpec {
    /// Root, eight networks and a graph-only network at level 1, with the
    /// two forum communities under `lt`.
    pub fn default_config(registry: &FeatureRegistry) -> Result<Self, HierarchyError> {
        Self::from_toml(DEFAULT_TREE, registry)
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_TREE
    }

    pub fn from_toml(text: &str, registry: &FeatureRegistry) -> Result<Self, HierarchyError> {
        let file: TreeFile = toml::from_str(text)?;
        let presence = match file.presence.as_deref() {
            None | Some("zero-fill") => PresenceMode::ZeroFill,
            Some("present-only") => PresenceMode::PresentOnly,
            Some(other) => return Err(HierarchyError::BadOption(other.to_string())),
        };
        let mut by_id: BTreeMap<&str, &NodeFile> = BTreeMap::new();
        for n in &file.node {
            if !is_dimension_name(&n.id) {
                return Err(HierarchyError::BadId(n.id.clone()));
            }
            if by_id.insert(&n.id, n).is_some() {
                return Err(HierarchyError::DuplicateNode(n.id.clone()));
            }
        }
        for n in &file.node {
            for c in &n.children {
                if !by_id.contains_key(c.as_str()) {
                    return Err(HierarchyError::UnknownChild {
                        parent: n.id.clone(),
                        child: c.clone(),
                    });
                }
            }
        }
        if !by_id.contains_key("root") {
            return Err(HierarchyError::MissingRoot);
        }
        let mut seen = BTreeSet::new();
        let root = build(&by_id, "root", 0, &mut seen, registry)?;
        if let Some(orphan) = by_id.keys().find(|id| !seen.contains(**id)) {
            return Err(HierarchyError::Unreachable(orphan.to_string()));
        }
        let mut leaves = Vec::new();
        root.leaves(&mut leaves);
        let mut networks = BTreeSet::new();
        for n in leaves {
            if !networks.insert(n) {
                return Err(HierarchyError::DuplicateNetwork(n.to_string()));
            }
        }
        Ok(TreeSpec { root, presence })
    }
}

fn build<'a>(
    by_id: &BTreeMap<&'a str, &'a NodeFile>,
    id: &'a str,
    level: usize,
    seen: &mut BTreeSet<&'a str>,
    registry: &FeatureRegistry,
) -> Result<ScoreNode, HierarchyError> {
    if !seen.insert(id) {
        return Err(HierarchyError::NotATree(id.to_string()));
    }
    let n = by_id[id];
    let basis = match n.basis.as_deref() {
        None | Some("graph_size") => Basis::GraphSize,
        Some("avg_degree") => Basis::AvgDegree,
        Some(other) => return Err(HierarchyError::BadOption(other.to_string())),
    };
    let combiner = match (n.combiner.as_deref(), n.children.is_empty()) {
        (None, true) | (Some("dot"), _) => Combiner::Dot,
        (None, false) | (Some("l2"), false) => Combiner::L2,
        _ => return Err(HierarchyError::BadShape(id.to_string())),
    };
    let network = match (&n.network, n.children.is_empty()) {
        (Some(net), true) => {
            let name = NetworkName::new(net).map_err(|_| HierarchyError::UnknownNetwork {
                node: id.to_string(),
                network: net.clone(),
            })?;
            if registry.layout(&name).is_none() {
                return Err(HierarchyError::UnknownNetwork {
                    node: id.to_string(),
                    network: net.clone(),
                });
            }
            if n.weights.is_some() || n.basis.is_some() {
                return Err(HierarchyError::BadShape(id.to_string()));
            }
            Some(name)
        }
        (None, false) => None,
        _ => return Err(HierarchyError::BadShape(id.to_string())),
    };
    if let Some(w) = &n.weights {
        if w.len() != n.children.len() {
            return Err(HierarchyError::WeightCount {
                node: id.to_string(),
                count: w.len(),
                children: n.children.len(),
            });
        }
        if !valid_weights(w) {
            return Err(HierarchyError::BadWeights(id.to_string()));
        }
    }
    let children = n
        .children
        .iter()
        .map(|c| build(by_id, c, level + 1, seen, registry))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreNode {
        id: id.to_string(),
        level,
        combiner,
        network,
        children,
        basis,
        weights: n.weights.clone(),
    })
}

fn valid_weights(w: &[f64]) -> bool {
    w.iter().all(|x| x.is_finite() && *x >= 0.0) && w.iter().any(|x| *x > 0.0)
}

#[derive(Debug, Clone)]
enum Kind {
    Leaf {
        network: NetworkName,
        weights: Vec<f64>,
    },
    Internal {
        children: Vec<usize>,
        weights: Vec<f64>,
        combiner: Combiner,
    },
}

#[derive(Debug, Clone)]
struct Compiled {
    id: String,
    kind: Kind,
}

/// A tree with every weight resolved, ready to score users. Nodes are kept
/// in post-order so one forward pass evaluates children before parents.
#[derive(Debug, Clone)]
pub struct ScoringTree {
    nodes: Vec<Compiled>,
    presence: PresenceMode,
    pruned: Vec<String>,
}

impl ScoringTree {
    /// Resolves leaf weights from `models` and internal weights from the
    /// explicit config or `stats`. Leaves without a model, and internal nodes
    /// left without children, are pruned.
    pub fn compile(
        spec: &TreeSpec,
        models: &BTreeMap<NetworkName, WeightVector>,
        stats: &BTreeMap<NetworkName, NetworkStats>,
        registry: &FeatureRegistry,
    ) -> Result<Self, HierarchyError> {
        let mut tree = ScoringTree {
            nodes: Vec::new(),
            presence: spec.presence,
            pruned: Vec::new(),
        };
        if tree.add(&spec.root, models, stats, registry)?.is_none() {
            return Err(HierarchyError::EmptyTree);
        }
        Ok(tree)
    }

    fn add(
        &mut self,
        node: &ScoreNode,
        models: &BTreeMap<NetworkName, WeightVector>,
        stats: &BTreeMap<NetworkName, NetworkStats>,
        registry: &FeatureRegistry,
    ) -> Result<Option<(usize, NetworkStats)>, HierarchyError> {
        if let Some(net) = &node.network {
            let Some(model) = models.get(net) else {
                self.pruned.push(node.id.clone());
                return Ok(None);
            };
            let layout = registry
                .layout(net)
                .ok_or_else(|| HierarchyError::UnknownNetwork {
                    node: node.id.clone(),
                    network: net.to_string(),
                })?;
            if model.layout_hash != layout.hash() || model.weights.len() != layout.len() {
                return Err(HierarchyError::LayoutMismatch {
                    network: net.clone(),
                });
            }
            let stat = stats.get(net).copied().unwrap_or_default();
            self.nodes.push(Compiled {
                id: node.id.clone(),
                kind: Kind::Leaf {
                    network: net.clone(),
                    weights: model.weights.clone(),
                },
            });
            return Ok(Some((self.nodes.len() - 1, stat)));
        }

        let mut kept = Vec::new();
        for (i, child) in node.children.iter().enumerate() {
            if let Some((idx, stat)) = self.add(child, models, stats, registry)? {
                kept.push((i, idx, stat));
            }
        }
        if kept.is_empty() {
            self.pruned.push(node.id.clone());
            return Ok(None);
        }
        let weights = match &node.weights {
            Some(w) => kept.iter().map(|&(i, _, _)| w[i]).collect(),
            None => {
                let child_stats: Vec<NetworkStats> = kept.iter().map(|k| k.2).collect();
                if let Some(&(i, _, _)) = kept.iter().find(|k| k.2.nodes == 0.0) {
                    return Err(HierarchyError::MissingStat {
                        node: node.id.clone(),
                        child: node.children[i].id.clone(),
                        basis: node.basis.name(),
                    });
                }
                heuristic_weights(node.basis, &child_stats)
                    .ok_or_else(|| HierarchyError::BadWeights(node.id.clone()))?
            }
        };
        if !valid_weights(&weights) {
            return Err(HierarchyError::BadWeights(node.id.clone()));
        }
        let stat = kept
            .iter()
            .fold(NetworkStats::default(), |acc, k| acc.combine(&k.2));
        self.nodes.push(Compiled {
            id: node.id.clone(),
            kind: Kind::Internal {
                children: kept.iter().map(|k| k.1).collect(),
                weights,
                combiner: node.combiner,
            },
        });
        Ok(Some((self.nodes.len() - 1, stat)))
    }

    /// Ids of nodes dropped for lack of a model.
    pub fn pruned(&self) -> &[String] {
        &self.pruned
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    /// Resolved child weights of an internal node.
    pub fn weights_of(&self, id: &str) -> Option<&[f64]> {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .map(|n| match &n.kind {
                Kind::Leaf { weights, .. } | Kind::Internal { weights, .. } => weights.as_slice(),
            })
    }

    /// Network scored by leaf `id`; `None` for internal or unknown nodes.
    pub fn leaf_network(&self, id: &str) -> Option<&NetworkName> {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .and_then(|n| match &n.kind {
                Kind::Leaf { network, .. } => Some(network),
                Kind::Internal { .. } => None,
            })
    }

    /// Networks of the remaining leaves.
    pub fn networks(&self) -> impl Iterator<Item = &NetworkName> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            Kind::Leaf { network, .. } => Some(network),
            Kind::Internal { .. } => None,
        })
    }

    /// `None` when the user has no feature vector on any remaining leaf.
    pub fn score_user(&self, user: &UserId, store: &FeatureStore) -> Option<ScoreEntry> {
        let mut scores: Vec<Option<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let s = match &node.kind {
                Kind::Leaf { network, weights } => store
                    .network(network)
                    .and_then(|nf| nf.vector(user))
                    .map(|f| leaf_score(f, weights)),
                Kind::Internal {
                    children,
                    weights,
                    combiner,
                } => self.combine(children.iter().map(|&c| scores[c]), weights, *combiner),
            };
            scores.push(s);
        }
        let raw = (*scores.last()?)?;
        let nodes = self
            .nodes
            .iter()
            .zip(&scores)
            .filter_map(|(n, s)| s.map(|s| (n.id.clone(), s)))
            .collect();
        Some(ScoreEntry {
            overall: 100.0 * raw,
            raw,
            nodes,
        })
    }

    fn combine(
        &self,
        children: impl Iterator<Item = Option<f64>>,
        weights: &[f64],
        combiner: Combiner,
    ) -> Option<f64> {
        let children: Vec<Option<f64>> = children.collect();
        if children.iter().all(Option::is_none) {
            return None;
        }
        let (f, w): (Vec<f64>, Vec<f64>) = match self.presence {
            PresenceMode::ZeroFill => (
                children.iter().map(|c| c.unwrap_or(0.0)).collect(),
                weights.to_vec(),
            ),
            PresenceMode::PresentOnly => children
                .iter()
                .zip(weights)
                .filter_map(|(c, &w)| c.map(|c| (c, w)))
                .unzip(),
        };
        Some(match combiner {
            Combiner::Dot => leaf_score(&f, &w),
            Combiner::L2 => l2_combine(&f, &w).unwrap_or(0.0),
        })
    }

    /// Scores every user with a vector on at least one remaining leaf.
    pub fn score_all(&self, store: &FeatureStore, as_of: NaiveDate) -> ScoreSnapshot {
        let users: BTreeSet<&UserId> = self
            .networks()
            .filter_map(|n| store.network(n))
            .flat_map(|nf| nf.vectors.keys())
            .collect();
        let users: Vec<&UserId> = users.into_iter().collect();
        let entries = users
            .par_iter()
            .filter_map(|&u| self.score_user(u, store).map(|e| (u.clone(), e)))
            .collect();
        ScoreSnapshot { as_of, entries }
    }
}
