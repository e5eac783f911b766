use std::fmt::Write as _;

use super::TrainingError;
use crate::codec::{is_skippable, Record};
use crate::event::NetworkName;
use crate::registry::{FeatureKey, FeatureRegistry};

/// Non-negative weights aligned to a network's key layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub network: NetworkName,
    pub layout_hash: String,
    pub keys: Vec<FeatureKey>,
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// Panics on a length mismatch; layouts are checked when models load.
    pub fn dot(&self, f: &[f64]) -> f64 {
        assert_eq!(
            f.len(),
            self.weights.len(),
            "feature/weight length mismatch"
        );
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub weights: WeightVector,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

/// Header record, then one `feature=<key>\tweight=<w>` line per layout key.
pub fn write_model(model: &TrainedModel) -> String {
    let w = &model.weights;
    let header = Record::new()
        .with("network", &w.network)
        .with("registry_hash", &w.layout_hash)
        .with("iterations", model.iterations)
        .with("converged", model.converged)
        .with("residual_norm", model.residual_norm);
    let mut out = format!("{header}\n");
    for (k, v) in w.keys.iter().zip(&w.weights) {
        writeln!(
            out,
            "{}",
            Record::new().with("feature", k).with("weight", v)
        )
        .unwrap();
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> TrainingError {
    TrainingError::ModelFormat {
        line,
        msg: msg.into(),
    }
}

/// Parses a model file and checks it against the registry's current layout
/// for its network: same hash and the same keys in the same order.
pub fn parse_model(text: &str, registry: &FeatureRegistry) -> Result<TrainedModel, TrainingError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !is_skippable(l));
    let (n, first) = lines.next().ok_or_else(|| bad(1, "empty model file"))?;
    let header = Record::parse(first).map_err(|e| bad(n, e.to_string()))?;
    header
        .expect_only(
            &[
                "network",
                "registry_hash",
                "iterations",
                "converged",
                "residual_norm",
            ],
            &[],
        )
        .map_err(|e| bad(n, e.to_string()))?;
    let network = NetworkName::new(
        header
            .require("network")
            .map_err(|e| bad(n, e.to_string()))?,
    )
    .map_err(|e| bad(n, e.to_string()))?;
    let found = header
        .require("registry_hash")
        .map_err(|e| bad(n, e.to_string()))?
        .to_string();
    let iterations = header
        .parse_field("iterations")
        .map_err(|e| bad(n, e.to_string()))?;
    let converged = header
        .parse_field("converged")
        .map_err(|e| bad(n, e.to_string()))?;
    let residual_norm: f64 = header
        .parse_field("residual_norm")
        .map_err(|e| bad(n, e.to_string()))?;

    let layout = registry
        .layout(&network)
        .ok_or_else(|| TrainingError::UnknownNetwork(network.clone()))?;
    if layout.hash() != found {
        return Err(TrainingError::HashMismatch {
            network,
            expected: layout.hash().to_string(),
            found,
        });
    }

    let mut weights = Vec::with_capacity(layout.len());
    for (n, line) in lines {
        let r = Record::parse(line).map_err(|e| bad(n, e.to_string()))?;
        r.expect_only(&["feature", "weight"], &[])
            .map_err(|e| bad(n, e.to_string()))?;
        let key: FeatureKey = r
            .require("feature")
            .map_err(|e| bad(n, e.to_string()))?
            .parse()
            .map_err(|_| bad(n, "invalid feature key"))?;
        if layout.keys().get(weights.len()) != Some(&key) {
            return Err(bad(n, format!("feature {key} out of layout order")));
        }
        let w: f64 = r.parse_field("weight").map_err(|e| bad(n, e.to_string()))?;
        if !(w.is_finite() && w >= 0.0) {
            return Err(bad(
                n,
                format!("weight {w} is not a finite non-negative number"),
            ));
        }
        weights.push(w);
    }
    if weights.len() != layout.len() {
        return Err(bad(
            0,
            format!("expected {} weights, found {}", layout.len(), weights.len()),
        ));
    }
    Ok(TrainedModel {
        weights: WeightVector {
            network,
            layout_hash: found,
            keys: layout.keys().to_vec(),
            weights,
        },
        iterations,
        converged,
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(reg: &FeatureRegistry) -> TrainedModel {
        let net = NetworkName::new("yt").unwrap();
        let layout = reg.layout(&net).unwrap();
        TrainedModel {
            weights: WeightVector {
                network: net,
                layout_hash: layout.hash().to_string(),
                keys: layout.keys().to_vec(),
                weights: (0..layout.len()).map(|i| i as f64 / 7.0).collect(),
            },
            iterations: 4,
            converged: true,
            residual_norm: 0.125,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let reg = FeatureRegistry::default_config();
        let m = model(&reg);
        let text = write_model(&m);
        assert_eq!(parse_model(&text, &reg).unwrap(), m);
        assert_eq!(write_model(&parse_model(&text, &reg).unwrap()), text);
    }

    #[test]
    fn rejects_layout_drift() {
        let reg = FeatureRegistry::default_config();
        let text = write_model(&model(&reg));
        let other = FeatureRegistry::from_toml(
            "[[network]]\nname = \"yt\"\ncontent_types = [\"video\"]\nactions = [\"like\"]\n",
        )
        .unwrap();
        assert!(matches!(
            parse_model(&text, &other),
            Err(TrainingError::HashMismatch { .. })
        ));

        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(parse_model(&truncated, &reg).is_err());
        let negative = text.replacen("weight=0\n", "weight=-1\n", 1);
        assert!(parse_model(&negative, &reg).is_err());
        assert!(parse_model("", &reg).is_err());
    }
}
