//! Weight learning from pairwise human judgements.
//!
//! Each judgement with a clear winner becomes one regression row: the
//! winner's feature vector minus the loser's, with target 1. Non-negative
//! least squares over those rows gives the network's weight vector.

pub mod model;
pub mod nnls;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::Record;
use crate::event::{NetworkName, PairwiseLabel, UserId};
use crate::features::NetworkFeatures;

pub use model::{parse_model, write_model, TrainedModel, WeightVector};
pub use nnls::{kkt_residual, nnls_solve, NnlsParams, NnlsSolution};

/// Minimum vote difference for a judgement to count.
pub const MIN_MARGIN: u32 = 2;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("regression system has no rows")]
    EmptySystem,
    #[error("design matrix has {rows} rows but {targets} targets")]
    Shape { rows: usize, targets: usize },
    #[error("network {0}: no usable training pairs")]
    NoPairs(NetworkName),
    #[error("network {0}: no feature vectors")]
    NoFeatures(NetworkName),
    #[error("model line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },
    #[error("model for {network} was trained against key layout {found}, registry has {expected}")]
    HashMismatch {
        network: NetworkName,
        expected: String,
        found: String,
    },
    #[error("network {0} is not in the registry")]
    UnknownNetwork(NetworkName),
}

/// A judgement with a clear winner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CleanPair {
    pub network: NetworkName,
    pub winner: UserId,
    pub loser: UserId,
    pub margin: u32,
}

/// Merges repeated judgements of the same unordered pair by summing votes,
/// then keeps pairs whose vote difference is at least [`MIN_MARGIN`].
/// Self-pairs are dropped. Output is sorted.
pub fn preprocess_labels(labels: &[PairwiseLabel]) -> Vec<CleanPair> {
    let mut merged: BTreeMap<(NetworkName, UserId, UserId), (u64, u64)> = BTreeMap::new();
    for l in labels {
        if l.user_a == l.user_b {
            continue;
        }
        let (lo, hi, v_lo, v_hi) = if l.user_a < l.user_b {
            (&l.user_a, &l.user_b, l.votes_a, l.votes_b)
        } else {
            (&l.user_b, &l.user_a, l.votes_b, l.votes_a)
        };
        let e = merged
            .entry((l.network.clone(), lo.clone(), hi.clone()))
            .or_insert((0, 0));
        e.0 += u64::from(v_lo);
        e.1 += u64::from(v_hi);
    }
    let mut out: Vec<CleanPair> = merged
        .into_iter()
        .filter_map(|((network, lo, hi), (v_lo, v_hi))| {
            let margin = u32::try_from(v_lo.abs_diff(v_hi)).unwrap_or(u32::MAX);
            if margin < MIN_MARGIN {
                return None;
            }
            let (winner, loser) = if v_lo > v_hi { (lo, hi) } else { (hi, lo) };
            Some(CleanPair {
                network,
                winner,
                loser,
                margin,
            })
        })
        .collect();
    out.sort();
    out
}

/// Seeded shuffle, then the first `train_fraction` of pairs (rounded) go to
/// training and the rest to evaluation.
pub fn split_pairs(
    pairs: &[CleanPair],
    train_fraction: f64,
    seed: u64,
) -> (Vec<CleanPair>, Vec<CleanPair>) {
    let mut shuffled = pairs.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((shuffled.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let eval = shuffled.split_off(cut);
    (shuffled, eval)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Pairs whose users lack a feature vector for the network.
    pub skipped: usize,
}

/// One row `f(winner) - f(loser)` with target 1 per usable pair.
pub fn build_design(pairs: &[CleanPair], features: &NetworkFeatures) -> Design {
    let cols = features.keys.len();
    let mut data = Vec::new();
    let mut skipped = 0;
    for p in pairs {
        match (features.vector(&p.winner), features.vector(&p.loser)) {
            (Some(w), Some(l)) => {
                data.push(w.iter().zip(l).map(|(a, b)| a - b).collect::<Vec<f64>>())
            }
            _ => skipped += 1,
        }
    }
    let rows = data.len();
    Design {
        x: DMatrix::from_fn(rows, cols, |r, c| data[r][c]),
        y: DVector::from_element(rows, 1.0),
        skipped,
    }
}

/// Fits one network's weights on the given training pairs.
pub fn train_network(
    pairs: &[CleanPair],
    features: &NetworkFeatures,
    params: &NnlsParams,
) -> Result<(TrainedModel, usize), TrainingError> {
    let design = build_design(pairs, features);
    if design.x.nrows() == 0 {
        return Err(TrainingError::NoPairs(features.network.clone()));
    }
    let sol = nnls_solve(&design.x, &design.y, params)?;
    let model = TrainedModel {
        weights: WeightVector {
            network: features.network.clone(),
            layout_hash: features.layout_hash.clone(),
            keys: features.keys.clone(),
            weights: sol.w,
        },
        iterations: sol.iterations,
        converged: sol.converged,
        residual_norm: sol.residual_norm,
    };
    Ok((model, design.skipped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub network: NetworkName,
    pub pairwise_accuracy: f64,
    pub f1: f64,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    /// Evaluation pairs without feature vectors.
    pub skipped_pairs: usize,
    pub solver_iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

impl ModelReport {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("report", "model")
            .with("network", &self.network)
            .with("accuracy", format!("{:.6}", self.pairwise_accuracy))
            .with("f1", format!("{:.6}", self.f1))
            .with("train_pairs", self.train_pairs)
            .with("eval_pairs", self.eval_pairs)
            .with("skipped_pairs", self.skipped_pairs)
            .with("iterations", self.solver_iterations)
            .with("converged", self.converged)
            .with("residual_norm", format!("{:.6e}", self.residual_norm))
    }
}

/// Pairwise accuracy (ties count one half) and F1 of the task "the first
/// listed user is the winner", with each pair presented in both orders.
pub fn evaluate_model(
    model: &TrainedModel,
    train_pairs: usize,
    pairs: &[CleanPair],
    features: &NetworkFeatures,
) -> ModelReport {
    let w = &model.weights;
    let (mut correct, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for p in pairs {
        match (features.vector(&p.winner), features.vector(&p.loser)) {
            (Some(fw), Some(fl)) => {
                used += 1;
                let (sw, sl) = (w.dot(fw), w.dot(fl));
                correct += if sw > sl {
                    1.0
                } else if sw == sl {
                    0.5
                } else {
                    0.0
                };
            }
            _ => skipped += 1,
        }
    }
    let accuracy = if used == 0 {
        0.0
    } else {
        correct / used as f64
    };
    // (winner, loser) is a positive instance, (loser, winner) a negative one;
    // a tie predicts each class with weight one half.
    let tp = correct;
    let fn_ = used as f64 - correct;
    let fp = used as f64 - correct;
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    ModelReport {
        network: w.network.clone(),
        pairwise_accuracy: accuracy,
        f1,
        train_pairs,
        eval_pairs: used,
        skipped_pairs: skipped,
        solver_iterations: model.iterations,
        converged: model.converged,
        residual_norm: model.residual_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::FeatureKey;

    fn uid(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn label(a: &str, b: &str, va: u32, vb: u32) -> PairwiseLabel {
        PairwiseLabel {
            network: NetworkName::new("tw").unwrap(),
            user_a: uid(a),
            user_b: uid(b),
            votes_a: va,
            votes_b: vb,
        }
    }

    fn features(vectors: &[(&str, Vec<f64>)]) -> NetworkFeatures {
        let net = NetworkName::new("tw").unwrap();
        let dim = vectors.first().map_or(0, |v| v.1.len());
        NetworkFeatures {
            network: net.clone(),
            layout_hash: "h".into(),
            keys: (0..dim)
                .map(|i| FeatureKey::longlasting(&net, &format!("f{i}")))
                .collect(),
            vectors: vectors.iter().map(|(u, v)| (uid(u), v.clone())).collect(),
        }
    }

    #[test]
    fn margin_rule() {
        let pairs = preprocess_labels(&[
            label("a", "b", 5, 3),
            label("c", "d", 4, 3),
            label("e", "f", 2, 2),
        ]);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].winner, uid("a"));
        assert_eq!(pairs[0].loser, uid("b"));
        assert_eq!(pairs[0].margin, 2);
    }

    #[test]
    fn duplicates_merge_before_threshold() {
        // 4-3 and 3-1 from the other side: a has 4+1=5, b has 3+3=6
        let pairs = preprocess_labels(&[label("a", "b", 4, 3), label("b", "a", 3, 1)]);
        assert!(pairs.is_empty());
        let pairs = preprocess_labels(&[label("a", "b", 4, 3), label("b", "a", 1, 2)]);
        assert_eq!(pairs[0].winner, uid("a"));
        assert_eq!(pairs[0].margin, 2);
        assert!(preprocess_labels(&[label("a", "a", 5, 0)]).is_empty());
    }

    #[test]
    fn design_rows_are_differences() {
        let f = features(&[("w", vec![0.8, 0.2]), ("l", vec![0.3, 0.2])]);
        let pairs = preprocess_labels(&[label("w", "l", 5, 0), label("w", "ghost", 5, 0)]);
        let d = build_design(&pairs, &f);
        assert_eq!(d.x.nrows(), 1);
        assert!((d.x[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(d.x[(0, 1)], 0.0);
        assert_eq!(d.y[0], 1.0);
        assert_eq!(d.skipped, 1);
    }

    #[test]
    fn training_refuses_zero_pairs() {
        let f = features(&[("w", vec![0.8])]);
        assert!(matches!(
            train_network(&[], &f, &NnlsParams::default()),
            Err(TrainingError::NoPairs(_))
        ));
    }

    #[test]
    fn zero_weights_give_half_accuracy() {
        let f = features(&[("a", vec![1.0]), ("b", vec![0.0])]);
        let pairs = preprocess_labels(&[label("a", "b", 5, 0)]);
        let mut model = train_network(&pairs, &f, &NnlsParams::default()).unwrap().0;
        assert_eq!(evaluate_model(&model, 1, &pairs, &f).pairwise_accuracy, 1.0);
        model.weights.weights = vec![0.0];
        let r = evaluate_model(&model, 1, &pairs, &f);
        assert_eq!(r.pairwise_accuracy, 0.5);
        assert_eq!(r.f1, 0.5);
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let labels: Vec<_> = (0..50)
            .map(|i| label(&format!("a{i}"), &format!("b{i}"), 5, 0))
            .collect();
        let pairs = preprocess_labels(&labels);
        let (t1, e1) = split_pairs(&pairs, TRAIN_FRACTION, 3);
        let (t2, e2) = split_pairs(&pairs, TRAIN_FRACTION, 3);
        assert_eq!((t1.len(), e1.len()), (40, 10));
        assert_eq!((&t1, &e1), (&t2, &e2));
        let mut all: Vec<_> = t1.into_iter().chain(e1).collect();
        all.sort();
        assert_eq!(all, pairs);
    }
}
