//! Dimension and feature registry.
//!
//! The registry is loaded from a TOML file listing, per network, the content
//! types and actions that dynamic features are built from, the long-lasting
//! profile attributes, and whether the network carries a graph. It freezes a
//! sorted feature-key ordering for every network; dense feature vectors and
//! weight vectors are aligned to that ordering and identified by its hash.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event::{is_dimension_name, NetworkName, WINDOW_SPANS};

pub const PAGERANK_ATTR: &str = "pagerank";
pub const INLINK_RATIO_ATTR: &str = "inlink_ratio";

/// Networks that may never carry dynamic features.
const GRAPH_ONLY_NETWORKS: [&str; 1] = ["wk"];

const DEFAULT_REGISTRY: &str = include_str!("../config/registry.toml");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid name {0:?}")]
    BadName(String),
    #[error("network {0} declared twice")]
    DuplicateNetwork(String),
    #[error("network {0} is graph-only and cannot declare content types or actions")]
    GraphOnly(String),
    #[error("network {network}: duplicate {what} {name:?}")]
    Duplicate {
        network: String,
        what: &'static str,
        name: String,
    },
    #[error("network {0} declares content types without actions (or the reverse)")]
    HalfDynamic(String),
    #[error("window list must be a strictly increasing subset of 3,7,14,21,30,60,90")]
    BadWindows,
    #[error("unknown or repeated cohort {0:?}")]
    BadCohort(String),
    #[error("categorical attribute {0:?} has no ordinal map")]
    MissingOrdinal(String),
    #[error("invalid feature key {0:?}")]
    BadKey(String),
}

/// Audience bucket of the reactor relative to the author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cohort {
    All,
    Higher,
    Peers,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::All, Cohort::Higher, Cohort::Peers];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::All => "all",
            Cohort::Higher => "higher",
            Cohort::Peers => "peers",
        }
    }
}

impl FromStr for Cohort {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Cohort::All),
            "higher" => Ok(Cohort::Higher),
            "peers" => Ok(Cohort::Peers),
            _ => Err(RegistryError::BadCohort(s.to_string())),
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DynamicKey {
    pub network: NetworkName,
    pub content_type: String,
    pub action: String,
    pub cohort: Cohort,
    pub window_days: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LongLastingKey {
    pub network: NetworkName,
    pub attr: String,
}

/// Identity of one aggregated feature. The canonical string forms are
/// `dyn/<network>/<content>/<action>/<cohort>/<window>d` and
/// `ll/<network>/<attr>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKey {
    Dynamic(DynamicKey),
    LongLasting(LongLastingKey),
}

impl FeatureKey {
    pub fn network(&self) -> &NetworkName {
        match self {
            FeatureKey::Dynamic(k) => &k.network,
            FeatureKey::LongLasting(k) => &k.network,
        }
    }

    pub fn longlasting(network: &NetworkName, attr: &str) -> Self {
        FeatureKey::LongLasting(LongLastingKey {
            network: network.clone(),
            attr: attr.to_string(),
        })
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::Dynamic(k) => write!(
                f,
                "dyn/{}/{}/{}/{}/{}d",
                k.network, k.content_type, k.action, k.cohort, k.window_days
            ),
            FeatureKey::LongLasting(k) => write!(f, "ll/{}/{}", k.network, k.attr),
        }
    }
}

impl FromStr for FeatureKey {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RegistryError::BadKey(s.to_string());
        let parts: Vec<&str> = s.split('/').collect();
        if parts.iter().skip(1).any(|p| !is_dimension_name(p)) {
            return Err(bad());
        }
        let network = |p: &str| NetworkName::new(p).map_err(|_| bad());
        match parts.as_slice() {
            ["dyn", net, content, action, cohort, window] => {
                let days = window.strip_suffix('d').ok_or_else(bad)?;
                let window_days: u32 = days.parse().map_err(|_| bad())?;
                if !WINDOW_SPANS.contains(&window_days) || window_days.to_string() != days {
                    return Err(bad());
                }
                Ok(FeatureKey::Dynamic(DynamicKey {
                    network: network(net)?,
                    content_type: content.to_string(),
                    action: action.to_string(),
                    cohort: cohort.parse().map_err(|_| bad())?,
                    window_days,
                }))
            }
            ["ll", net, attr] => Ok(FeatureKey::LongLasting(LongLastingKey {
                network: network(net)?,
                attr: attr.to_string(),
            })),
            _ => Err(bad()),
        }
    }
}

/// Per-network dimension values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: NetworkName,
    pub content_types: Vec<String>,
    pub actions: Vec<String>,
    pub numeric_attrs: Vec<String>,
    pub categorical_attrs: Vec<String>,
    /// Adds PageRank and in/out-link ratio features computed from edges.
    pub graph: bool,
}

impl NetworkSpec {
    pub fn is_dynamic(&self) -> bool {
        !self.content_types.is_empty()
    }

    /// Long-lasting attribute names in declaration order.
    pub fn longlasting_attrs(&self) -> Vec<&str> {
        let mut attrs: Vec<&str> = self
            .numeric_attrs
            .iter()
            .chain(&self.categorical_attrs)
            .map(String::as_str)
            .collect();
        if self.graph {
            attrs.push(PAGERANK_ATTR);
            attrs.push(INLINK_RATIO_ATTR);
        }
        attrs
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default = "default_windows")]
    windows: Vec<u32>,
    #[serde(default = "default_cohorts")]
    cohorts: Vec<String>,
    #[serde(default)]
    network: Vec<NetworkFile>,
    #[serde(default)]
    ordinal: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    #[serde(default)]
    content_types: Vec<String>,
    #[serde(default)]
    actions: Vec<String>,
    #[serde(default)]
    numeric_attrs: Vec<String>,
    #[serde(default)]
    categorical_attrs: Vec<String>,
    #[serde(default)]
    graph: bool,
}

fn default_windows() -> Vec<u32> {
    WINDOW_SPANS.to_vec()
}

fn default_cohorts() -> Vec<String> {
    Cohort::ALL.iter().map(|c| c.as_str().to_string()).collect()
}

/// Frozen key ordering for one network.
#[derive(Debug, Clone)]
pub struct KeyLayout {
    keys: Vec<FeatureKey>,
    index: HashMap<FeatureKey, usize>,
    hash: String,
}

impl KeyLayout {
    fn new(mut keys: Vec<FeatureKey>) -> Self {
        keys.sort();
        let index = keys
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let mut hasher = Sha256::new();
        for k in &keys {
            hasher.update(k.to_string().as_bytes());
            hasher.update(b"\n");
        }
        let hash = hex::encode(hasher.finalize());
        KeyLayout { keys, index, hash }
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn position(&self, key: &FeatureKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// SHA-256 over the canonical key strings, one per line.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

#[derive(Debug, Clone)]
pub struct FeatureRegistry {
    windows: Vec<u32>,
    cohorts: Vec<Cohort>,
    networks: Vec<NetworkSpec>,
    by_name: BTreeMap<NetworkName, usize>,
    ordinal: BTreeMap<String, Vec<String>>,
    layouts: BTreeMap<NetworkName, KeyLayout>,
}

impl FeatureRegistry {
    /// The registry shipped with the crate: seven social networks, two
    /// community forums and a graph-only encyclopedia network.
    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_REGISTRY).expect("bundled registry is valid")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_REGISTRY
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text)?;

        let mut windows = file.windows;
        if windows.is_empty()
            || windows.windows(2).any(|w| w[0] >= w[1])
            || windows.iter().any(|w| !WINDOW_SPANS.contains(w))
        {
            return Err(RegistryError::BadWindows);
        }
        windows.shrink_to_fit();

        let mut cohorts = Vec::new();
        for c in &file.cohorts {
            let cohort: Cohort = c.parse()?;
            if cohorts.contains(&cohort) {
                return Err(RegistryError::BadCohort(c.clone()));
            }
            cohorts.push(cohort);
        }
        if !cohorts.contains(&Cohort::All) {
            return Err(RegistryError::BadCohort("all".into()));
        }

        for (attr, values) in &file.ordinal {
            check_name(attr)?;
            let mut seen = std::collections::BTreeSet::new();
            for v in values {
                if !seen.insert(v) {
                    return Err(RegistryError::Duplicate {
                        network: "*".into(),
                        what: "ordinal value",
                        name: v.clone(),
                    });
                }
            }
        }

        let mut networks = Vec::new();
        let mut by_name = BTreeMap::new();
        for nf in file.network {
            let name =
                NetworkName::new(&nf.name).map_err(|_| RegistryError::BadName(nf.name.clone()))?;
            if name.as_str() != nf.name {
                return Err(RegistryError::BadName(nf.name));
            }
            if by_name.contains_key(&name) {
                return Err(RegistryError::DuplicateNetwork(nf.name));
            }
            let spec = NetworkSpec {
                content_types: unique_names(&name, "content type", nf.content_types)?,
                actions: unique_names(&name, "action", nf.actions)?,
                numeric_attrs: unique_names(&name, "numeric attribute", nf.numeric_attrs)?,
                categorical_attrs: unique_names(
                    &name,
                    "categorical attribute",
                    nf.categorical_attrs,
                )?,
                graph: nf.graph,
                name: name.clone(),
            };
            if spec.content_types.is_empty() != spec.actions.is_empty() {
                return Err(RegistryError::HalfDynamic(nf.name));
            }
            if spec.is_dynamic() && GRAPH_ONLY_NETWORKS.contains(&name.as_str()) {
                return Err(RegistryError::GraphOnly(nf.name));
            }
            let attrs = spec.longlasting_attrs();
            for (i, a) in attrs.iter().enumerate() {
                if attrs[..i].contains(a) {
                    return Err(RegistryError::Duplicate {
                        network: nf.name.clone(),
                        what: "long-lasting attribute",
                        name: a.to_string(),
                    });
                }
            }
            for a in &spec.categorical_attrs {
                if !file.ordinal.contains_key(a) {
                    return Err(RegistryError::MissingOrdinal(a.clone()));
                }
            }
            by_name.insert(name, networks.len());
            networks.push(spec);
        }

        let mut registry = FeatureRegistry {
            windows,
            cohorts,
            networks,
            by_name,
            ordinal: file.ordinal,
            layouts: BTreeMap::new(),
        };
        registry.layouts = registry
            .networks
            .iter()
            .map(|spec| {
                (
                    spec.name.clone(),
                    KeyLayout::new(registry.enumerate_keys(spec)),
                )
            })
            .collect();
        Ok(registry)
    }

    fn enumerate_keys(&self, spec: &NetworkSpec) -> Vec<FeatureKey> {
        let mut keys = Vec::new();
        for content in &spec.content_types {
            for action in &spec.actions {
                for &cohort in &self.cohorts {
                    for &window_days in &self.windows {
                        keys.push(FeatureKey::Dynamic(DynamicKey {
                            network: spec.name.clone(),
                            content_type: content.clone(),
                            action: action.clone(),
                            cohort,
                            window_days,
                        }));
                    }
                }
            }
        }
        for attr in spec.longlasting_attrs() {
            keys.push(FeatureKey::longlasting(&spec.name, attr));
        }
        keys
    }

    pub fn windows(&self) -> &[u32] {
        &self.windows
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohorts
    }

    /// Networks in declaration order.
    pub fn networks(&self) -> &[NetworkSpec] {
        &self.networks
    }

    pub fn network(&self, name: &NetworkName) -> Option<&NetworkSpec> {
        self.by_name.get(name).map(|&i| &self.networks[i])
    }

    pub fn ordinal_map(&self, attr: &str) -> Option<&[String]> {
        self.ordinal.get(attr).map(Vec::as_slice)
    }

    pub fn layout(&self, network: &NetworkName) -> Option<&KeyLayout> {
        self.layouts.get(network)
    }

    /// Whether the registry defines `key`.
    pub fn contains(&self, key: &FeatureKey) -> bool {
        self.layout(key.network())
            .is_some_and(|l| l.position(key).is_some())
    }

    pub fn dynamic_key_count(&self) -> usize {
        self.layouts
            .values()
            .flat_map(|l| l.keys())
            .filter(|k| matches!(k, FeatureKey::Dynamic(_)))
            .count()
    }

    pub fn longlasting_key_count(&self) -> usize {
        self.layouts
            .values()
            .flat_map(|l| l.keys())
            .filter(|k| matches!(k, FeatureKey::LongLasting(_)))
            .count()
    }
}

fn check_name(s: &str) -> Result<(), RegistryError> {
    if is_dimension_name(s) {
        Ok(())
    } else {
        Err(RegistryError::BadName(s.to_string()))
    }
}

fn unique_names(
    network: &NetworkName,
    what: &'static str,
    names: Vec<String>,
) -> Result<Vec<String>, RegistryError> {
    for (i, n) in names.iter().enumerate() {
        check_name(n)?;
        if names[..i].contains(n) {
            return Err(RegistryError::Duplicate {
                network: network.to_string(),
                what,
                name: n.clone(),
            });
        }
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dynamic_key_count_matches_dimension_product() {
        let reg = FeatureRegistry::default_config();
        let expected: usize = reg
            .networks()
            .iter()
            .map(|n| {
                reg.cohorts().len() * reg.windows().len() * n.content_types.len() * n.actions.len()
            })
            .sum();
        assert_eq!(reg.dynamic_key_count(), expected);
        assert_eq!(reg.cohorts().len(), 3);
        assert_eq!(reg.windows(), &WINDOW_SPANS);
        let ll: usize = reg
            .networks()
            .iter()
            .map(|n| n.longlasting_attrs().len())
            .sum();
        assert_eq!(reg.longlasting_key_count(), ll);
    }

    #[test]
    fn graph_only_network_has_no_dynamic_keys() {
        let reg = FeatureRegistry::default_config();
        let wk = NetworkName::new("wk").unwrap();
        let layout = reg.layout(&wk).unwrap();
        assert!(layout
            .keys()
            .iter()
            .all(|k| matches!(k, FeatureKey::LongLasting(_))));
        assert!(layout
            .position(&FeatureKey::longlasting(&wk, PAGERANK_ATTR))
            .is_some());

        let err = FeatureRegistry::from_toml(
            "[[network]]\nname = \"wk\"\ncontent_types = [\"message\"]\nactions = [\"like\"]\n",
        )
        .unwrap_err();
        assert!(matches!(err, RegistryError::GraphOnly(_)));
    }

    #[test]
    fn canonical_key_strings() {
        let key = FeatureKey::Dynamic(DynamicKey {
            network: NetworkName::new("fb").unwrap(),
            content_type: "photo".into(),
            action: "comment".into(),
            cohort: Cohort::Peers,
            window_days: 7,
        });
        assert_eq!(key.to_string(), "dyn/fb/photo/comment/peers/7d");
        assert_eq!(
            "dyn/fb/photo/comment/peers/7d"
                .parse::<FeatureKey>()
                .unwrap(),
            key
        );
        assert_eq!(
            "ll/li/education_level"
                .parse::<FeatureKey>()
                .unwrap()
                .to_string(),
            "ll/li/education_level"
        );
        for bad in [
            "dyn/fb/photo/comment/peers/8d",
            "dyn/fb/photo/comment/peers/07d",
            "ll/fb",
            "x/fb/a",
            "ll/FB/a",
            "dyn/fb/photo/comment/elders/7d",
        ] {
            assert!(bad.parse::<FeatureKey>().is_err(), "{bad}");
        }
    }

    #[test]
    fn layout_is_sorted_and_hash_is_stable() {
        let reg = FeatureRegistry::default_config();
        for spec in reg.networks() {
            let layout = reg.layout(&spec.name).unwrap();
            assert!(layout.keys().windows(2).all(|w| w[0] < w[1]));
            assert_eq!(layout.hash().len(), 64);
            for (i, k) in layout.keys().iter().enumerate() {
                assert_eq!(layout.position(k), Some(i));
            }
        }
        let again = FeatureRegistry::default_config();
        let tw = NetworkName::new("tw").unwrap();
        assert_eq!(
            reg.layout(&tw).unwrap().hash(),
            again.layout(&tw).unwrap().hash()
        );
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(matches!(
            FeatureRegistry::from_toml("windows = [7, 3]").unwrap_err(),
            RegistryError::BadWindows
        ));
        assert!(matches!(
            FeatureRegistry::from_toml("windows = [5]").unwrap_err(),
            RegistryError::BadWindows
        ));
        assert!(matches!(
            FeatureRegistry::from_toml("cohorts = [\"higher\"]").unwrap_err(),
            RegistryError::BadCohort(_)
        ));
        assert!(matches!(
            FeatureRegistry::from_toml(
                "[[network]]\nname=\"li\"\ncategorical_attrs=[\"job_title\"]"
            )
            .unwrap_err(),
            RegistryError::MissingOrdinal(_)
        ));
        assert!(matches!(
            FeatureRegistry::from_toml("[[network]]\nname=\"x\"\nactions=[\"like\"]").unwrap_err(),
            RegistryError::HalfDynamic(_)
        ));
        assert!(matches!(
            FeatureRegistry::from_toml("[[network]]\nname=\"TW\"").unwrap_err(),
            RegistryError::BadName(_)
        ));
        assert!(FeatureRegistry::from_toml("[[network]]\nname=\"x\"\nbogus=1").is_err());
    }

    proptest! {
        #[test]
        fn every_registry_key_round_trips(idx in 0usize..10_000) {
            let reg = FeatureRegistry::default_config();
            let all: Vec<&FeatureKey> = reg.networks().iter()
                .flat_map(|n| reg.layout(&n.name).unwrap().keys())
                .collect();
            let key = all[idx % all.len()];
            let text = key.to_string();
            prop_assert_eq!(&text.parse::<FeatureKey>().unwrap(), key);
        }
    }
}
