use std::collections::{BTreeMap, BTreeSet};

use super::FeatureError;
use crate::event::{GraphEdge, UserId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankParams {
    pub damping: f64,
    /// Bound on the L1 distance between the returned vector and the fixed point.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRank {
    pub scores: BTreeMap<UserId, f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Damped random-walk stationary distribution over the nodes of `edges`
/// plus any `extra_nodes`. Mass on dangling nodes is spread uniformly.
///
/// Iteration stops once `d/(1-d) * |x_k - x_{k-1}|_1 <= tol`, which bounds
/// the L1 distance to the true fixed point by `tol`. If `max_iter` runs out
/// first the last iterate is returned with `converged = false`.
pub fn pagerank<'a>(
    edges: impl IntoIterator<Item = &'a GraphEdge>,
    extra_nodes: impl IntoIterator<Item = &'a UserId>,
    params: &PageRankParams,
) -> Result<PageRank, FeatureError> {
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(FeatureError::BadDamping(params.damping));
    }
    let edges: Vec<&GraphEdge> = edges.into_iter().collect();
    let mut nodes: BTreeSet<&UserId> = extra_nodes.into_iter().collect();
    for e in &edges {
        nodes.insert(&e.from);
        nodes.insert(&e.to);
    }
    if nodes.is_empty() {
        return Err(FeatureError::EmptyGraph);
    }
    let nodes: Vec<&UserId> = nodes.into_iter().collect();
    let index: BTreeMap<&UserId, usize> = nodes.iter().enumerate().map(|(i, u)| (*u, i)).collect();
    let n = nodes.len();

    let mut out_degree = vec![0usize; n];
    let mut inbound: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &edges {
        let (from, to) = (index[&e.from], index[&e.to]);
        out_degree[from] += 1;
        inbound[to].push(from);
    }

    let d = params.damping;
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&i| out_degree[i] == 0).map(|i| x[i]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let flow: f64 = inbound[v]
                .iter()
                .map(|&u| x[u] / out_degree[u] as f64)
                .sum();
            *slot = base + d * flow;
        }
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if d / (1.0 - d) * delta <= params.tol {
            converged = true;
            break;
        }
    }

    Ok(PageRank {
        scores: nodes.into_iter().cloned().zip(x).collect(),
        converged,
        iterations,
    })
}
