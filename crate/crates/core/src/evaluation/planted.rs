//! Planted-weight pairwise problems for checking that training recovers a
//! known ordering.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::event::{NetworkName, UserId};
use crate::features::NetworkFeatures;
use crate::registry::FeatureKey;
use crate::training::CleanPair;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedParams {
    pub users: usize,
    pub dims: usize,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub flip_rate: f64,
    /// Pairs whose planted scores differ by less than this are redrawn.
    pub min_gap: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        PlantedParams {
            users: 1000,
            dims: 10,
            train_pairs: 2000,
            eval_pairs: 500,
            flip_rate: 0.15,
            min_gap: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedProblem {
    /// Normalized weights, summing to 1.
    pub weights: Vec<f64>,
    pub features: NetworkFeatures,
    pub train: Vec<CleanPair>,
    /// Evaluation pairs are never flipped.
    pub eval: Vec<CleanPair>,
}

impl PlantedProblem {
    pub fn planted_score(&self, user: &UserId) -> Option<f64> {
        let f = self.features.vector(user)?;
        Some(f.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }
}

/// Uniform features in `[0,1]^dims` and a non-negative weight vector with
/// about a third of its coordinates zero.
pub fn planted_problem(params: &PlantedParams, seed: u64) -> Result<PlantedProblem, EvalError> {
    if params.users < 2
        || params.dims == 0
        || !(0.0..=1.0).contains(&params.flip_rate)
        || params.min_gap.is_nan()
        || params.min_gap < 0.0
    {
        return Err(EvalError::BadParams("invalid planted problem".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = NetworkName::new("planted").unwrap();
    let mut weights: Vec<f64> = (0..params.dims)
        .map(|_| {
            if rng.random_bool(1.0 / 3.0) {
                0.0
            } else {
                rng.random_range(0.1..1.0)
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        weights[0] = 1.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let keys = (0..params.dims)
        .map(|d| FeatureKey::longlasting(&network, &format!("f{d}")))
        .collect();
    let ids: Vec<UserId> = (0..params.users)
        .map(|i| UserId::new(format!("p{i:05}")).unwrap())
        .collect();
    let vectors: BTreeMap<UserId, Vec<f64>> = ids
        .iter()
        .map(|id| {
            (
                id.clone(),
                (0..params.dims).map(|_| rng.random::<f64>()).collect(),
            )
        })
        .collect();
    let score = |u: &UserId| -> f64 { vectors[u].iter().zip(&weights).map(|(a, b)| a * b).sum() };

    let draw =
        |count: usize, flip: f64, rng: &mut ChaCha8Rng| -> Result<Vec<CleanPair>, EvalError> {
            let mut out = Vec::with_capacity(count);
            let mut attempts = 0usize;
            while out.len() < count {
                attempts += 1;
                if attempts > 1000 * count.max(1) {
                    return Err(EvalError::BadParams(
                        "min_gap too large to draw pairs".into(),
                    ));
                }
                let a = &ids[rng.random_range(0..ids.len())];
                let b = &ids[rng.random_range(0..ids.len())];
                let (sa, sb) = (score(a), score(b));
                if a == b || (sa - sb).abs() < params.min_gap {
                    continue;
                }
                let (mut w, mut l) = if sa > sb { (a, b) } else { (b, a) };
                if rng.random_bool(flip) {
                    std::mem::swap(&mut w, &mut l);
                }
                out.push(CleanPair {
                    network: network.clone(),
                    winner: w.clone(),
                    loser: l.clone(),
                    margin: 5,
                });
            }
            Ok(out)
        };
    let train = draw(params.train_pairs, params.flip_rate, &mut rng)?;
    let eval = draw(params.eval_pairs, 0.0, &mut rng)?;
    let layout_hash = format!("planted-{}", params.dims);
    Ok(PlantedProblem {
        weights,
        features: NetworkFeatures {
            network,
            layout_hash,
            keys,
            vectors,
        },
        train,
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_pairs_follow_planted_order() {
        let p = planted_problem(&PlantedParams::default(), 1).unwrap();
        assert_eq!(p.train.len(), 2000);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for pair in &p.eval {
            assert!(p.planted_score(&pair.winner).unwrap() > p.planted_score(&pair.loser).unwrap());
        }
        let flipped = p
            .train
            .iter()
            .filter(|q| p.planted_score(&q.winner) < p.planted_score(&q.loser))
            .count();
        assert!((200..400).contains(&flipped), "{flipped}");
        assert_eq!(p, planted_problem(&PlantedParams::default(), 1).unwrap());
    }
}
