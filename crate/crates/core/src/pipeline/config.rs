use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::ConfigError;
use crate::evaluation::{CampaignParams, PopulationParams};
use crate::features::{PageRankParams, DEFAULT_PEER_BAND};
use crate::hierarchy::TreeSpec;
use crate::ingest::InputPaths;
use crate::registry::FeatureRegistry;
use crate::training::{NnlsParams, TRAIN_FRACTION};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum TimeSpec {
    Epoch(i64),
    Text(String),
}

/// Accepts epoch seconds, an RFC 3339 timestamp or a `YYYY-MM-DD` date
/// (midnight UTC).
pub fn parse_reference_time(text: &str) -> Result<i64, ConfigError> {
    let text = text.trim();
    let t = if let Ok(secs) = text.parse::<i64>() {
        Some(secs)
    } else if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        Some(dt.timestamp())
    } else if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        d.and_hms_opt(0, 0, 0).map(|t| t.and_utc().timestamp())
    } else {
        None
    };
    t.filter(|&t| t > 0 && DateTime::from_timestamp(t, 0).is_some())
        .ok_or_else(|| ConfigError::BadReferenceTime(text.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    reference_time: Option<TimeSpec>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    registry: Option<PathBuf>,
    tree: Option<PathBuf>,
    prior_snapshot: Option<PathBuf>,
    #[serde(default)]
    inputs: InputsFile,
    #[serde(default)]
    features: FeatureSettings,
    #[serde(default)]
    training: TrainingSettings,
    #[serde(default)]
    evaluation: EvaluationFile,
    simulate: Option<PopulationParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputsFile {
    #[serde(default)]
    events: Vec<PathBuf>,
    #[serde(default)]
    profiles: Vec<PathBuf>,
    #[serde(default)]
    edges: Vec<PathBuf>,
    #[serde(default)]
    labels: Vec<PathBuf>,
    #[serde(default)]
    identities: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub shards: usize,
    pub peer_band: f64,
    pub damping: f64,
    pub pagerank_tol: f64,
    pub pagerank_max_iter: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        let pr = PageRankParams::default();
        FeatureSettings {
            shards: 4,
            peer_band: DEFAULT_PEER_BAND,
            damping: pr.damping,
            pagerank_tol: pr.tol,
            pagerank_max_iter: pr.max_iter,
        }
    }
}

impl FeatureSettings {
    pub fn pagerank(&self) -> PageRankParams {
        PageRankParams {
            damping: self.damping,
            tol: self.pagerank_tol,
            max_iter: self.pagerank_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub train_fraction: f64,
    pub nnls_tol: f64,
    pub nnls_max_iter: Option<usize>,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let p = NnlsParams::default();
        TrainingSettings {
            train_fraction: TRAIN_FRACTION,
            nnls_tol: p.tol,
            nnls_max_iter: p.max_iter,
        }
    }
}

impl TrainingSettings {
    pub fn nnls(&self) -> NnlsParams {
        NnlsParams {
            tol: self.nnls_tol,
            max_iter: self.nnls_max_iter,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluationFile {
    population: Option<PathBuf>,
    campaign: Option<CampaignParams>,
    #[serde(default)]
    references: Vec<NamedFile>,
    #[serde(default)]
    cohorts: Vec<NamedFile>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFile {
    pub name: String,
    pub path: PathBuf,
    /// nDCG cutoff for reference rankings; defaults to the ranking length.
    #[serde(default)]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSettings {
    /// Ground-truth population file; the simulated one when unset and the
    /// config has a `[simulate]` section.
    pub population: Option<PathBuf>,
    pub campaign: CampaignParams,
    pub references: Vec<NamedFile>,
    pub cohorts: Vec<NamedFile>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reference_time: Option<i64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// SHA-256 of the config file text.
    pub config_hash: String,
    pub reference_time: i64,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub registry: FeatureRegistry,
    pub registry_hash: String,
    pub tree: TreeSpec,
    pub tree_hash: String,
    pub prior_snapshot: Option<PathBuf>,
    /// Inputs as written in the config, resolved against its directory.
    pub inputs: InputPaths,
    pub features: FeatureSettings,
    pub training: TrainingSettings,
    pub evaluation: EvaluationSettings,
    pub simulate: Option<PopulationParams>,
    base_dir: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let base = path
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::from_toml(&text, &base, overrides)
    }

    /// Relative paths in `text` are resolved against `base_dir`.
    pub fn from_toml(
        text: &str,
        base_dir: &Path,
        overrides: &Overrides,
    ) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        let resolve = |p: &PathBuf| base_dir.join(p);

        let reference_time = match (overrides.reference_time, &file.reference_time) {
            (Some(t), _) => t,
            (None, Some(TimeSpec::Epoch(t))) => parse_reference_time(&t.to_string())?,
            (None, Some(TimeSpec::Text(s))) => parse_reference_time(s)?,
            (None, None) => return Err(ConfigError::Missing("reference_time")),
        };
        let output_dir = overrides
            .output_dir
            .clone()
            .or_else(|| file.output_dir.as_ref().map(resolve))
            .ok_or(ConfigError::Missing("output_dir"))?;

        let (registry, registry_hash) = match &file.registry {
            Some(p) => {
                let t = read(&resolve(p))?;
                (FeatureRegistry::from_toml(&t)?, sha256_hex(t.as_bytes()))
            }
            None => (
                FeatureRegistry::default_config(),
                sha256_hex(FeatureRegistry::default_toml().as_bytes()),
            ),
        };
        let (tree, tree_hash) = match &file.tree {
            Some(p) => {
                let t = read(&resolve(p))?;
                (
                    TreeSpec::from_toml(&t, &registry)?,
                    sha256_hex(t.as_bytes()),
                )
            }
            None => (
                TreeSpec::default_config(&registry)?,
                sha256_hex(TreeSpec::default_toml().as_bytes()),
            ),
        };

        let inputs = InputPaths {
            events: file.inputs.events.iter().map(resolve).collect(),
            profiles: file.inputs.profiles.iter().map(resolve).collect(),
            edges: file.inputs.edges.iter().map(resolve).collect(),
            labels: file.inputs.labels.iter().map(resolve).collect(),
            identities: file.inputs.identities.iter().map(resolve).collect(),
        };
        if file.simulate.is_some() && inputs.all().next().is_some() {
            return Err(ConfigError::Invalid(
                "[inputs] and [simulate] are mutually exclusive".into(),
            ));
        }
        let features = file.features;
        if features.shards == 0 {
            return Err(ConfigError::Invalid(
                "features.shards must be at least 1".into(),
            ));
        }
        if !(features.peer_band.is_finite() && features.peer_band > 0.0) {
            return Err(ConfigError::Invalid(
                "features.peer_band must be positive".into(),
            ));
        }
        let training = file.training;
        if !(0.0..=1.0).contains(&training.train_fraction) {
            return Err(ConfigError::Invalid(
                "training.train_fraction must be in [0, 1]".into(),
            ));
        }
        let evaluation = EvaluationSettings {
            population: file.evaluation.population.as_ref().map(resolve),
            campaign: file.evaluation.campaign.unwrap_or_default(),
            references: resolve_named(file.evaluation.references, base_dir),
            cohorts: resolve_named(file.evaluation.cohorts, base_dir),
        };

        Ok(RunConfig {
            config_hash: sha256_hex(text.as_bytes()),
            reference_time,
            seed: overrides.seed.or(file.seed),
            output_dir,
            registry,
            registry_hash,
            tree,
            tree_hash,
            prior_snapshot: file.prior_snapshot.as_ref().map(resolve),
            inputs,
            features,
            training,
            evaluation,
            simulate: file.simulate,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Seed for stages that may fall back to 0.
    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// `path` relative to the config directory when possible, for reports
    /// that must not depend on where the repository lives.
    pub fn display_path(&self, path: &Path) -> String {
        path.strip_prefix(&self.base_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    /// External files the run will read, with a label for error messages.
    pub fn external_files(&self) -> Vec<(&'static str, &Path)> {
        let mut out: Vec<(&'static str, &Path)> =
            self.inputs.all().map(|p| ("input", p.as_path())).collect();
        if let Some(p) = &self.prior_snapshot {
            out.push(("prior_snapshot", p));
        }
        if let Some(p) = &self.evaluation.population {
            out.push(("population", p));
        }
        out.extend(
            self.evaluation
                .references
                .iter()
                .map(|r| ("reference", r.path.as_path())),
        );
        out.extend(
            self.evaluation
                .cohorts
                .iter()
                .map(|c| ("cohort", c.path.as_path())),
        );
        out
    }

    /// Fails on the first referenced file that does not exist.
    pub fn check_files(&self) -> Result<(), ConfigError> {
        for (what, path) in self.external_files() {
            if !path.is_file() {
                return Err(ConfigError::MissingFile {
                    what,
                    path: path.to_path_buf(),
                });
            }
        }
        Ok(())
    }
}

fn resolve_named(items: Vec<NamedFile>, base: &Path) -> Vec<NamedFile> {
    items
        .into_iter()
        .map(|n| NamedFile {
            path: base.join(&n.path),
            ..n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_time_formats() {
        assert_eq!(parse_reference_time("1717200000").unwrap(), 1_717_200_000);
        assert_eq!(parse_reference_time("2024-06-01").unwrap(), 1_717_200_000);
        assert_eq!(
            parse_reference_time("2024-06-01T00:00:00Z").unwrap(),
            1_717_200_000
        );
        assert!(parse_reference_time("-5").is_err());
        assert!(parse_reference_time("june").is_err());
    }

    #[test]
    fn minimal_config_and_overrides() {
        let text = "reference_time = \"2024-06-01\"\noutput_dir = \"out\"\n[inputs]\nevents = [\"e.txt\"]\n";
        let c = RunConfig::from_toml(text, Path::new("/data"), &Overrides::default()).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("/data/out"));
        assert_eq!(c.inputs.events, vec![PathBuf::from("/data/e.txt")]);
        assert_eq!(c.seed, None);
        assert_eq!(c.features.shards, 4);
        let o = Overrides {
            seed: Some(7),
            reference_time: Some(1_000_000),
            output_dir: Some("/tmp/x".into()),
        };
        let c2 = RunConfig::from_toml(text, Path::new("/data"), &o).unwrap();
        assert_eq!((c2.seed, c2.reference_time), (Some(7), 1_000_000));
        assert_eq!(c2.config_hash, c.config_hash);
        assert!(c.check_files().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        let o = Overrides::default();
        assert!(RunConfig::from_toml("output_dir = \"o\"\n", base, &o).is_err());
        assert!(RunConfig::from_toml(
            "reference_time = 1\noutput_dir = \"o\"\ncolour = 1\n",
            base,
            &o
        )
        .is_err());
        let both = "reference_time = 1\noutput_dir = \"o\"\n[inputs]\nevents = [\"e\"]\n[simulate]\nusers = 10\n";
        assert!(RunConfig::from_toml(both, base, &o).is_err());
        let shards = "reference_time = 1\noutput_dir = \"o\"\n[features]\nshards = 0\n";
        assert!(RunConfig::from_toml(shards, base, &o).is_err());
    }
}
