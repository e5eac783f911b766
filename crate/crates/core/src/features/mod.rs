//! Raw feature aggregation and normalization.

pub mod aggregate;
pub mod cohort;
pub mod dump;
pub mod longlasting;
pub mod normalize;
pub mod pagerank;
pub mod sketch;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::event::{RecordError, UserId};
use crate::ingest::IngestError;
use crate::registry::FeatureKey;

pub use aggregate::{aggregate_dynamic, aggregate_events};
pub use cohort::{conditional_emit, CohortContext, DEFAULT_PEER_BAND};
pub use longlasting::{aggregate_longlasting, LongLastingReport};
pub use normalize::{
    build_feature_store, compute_global_maxima, normalize, FeatureStore, GlobalMaxima,
    NetworkFeatures, NormalizedFeatureVector,
};
pub use pagerank::{pagerank, PageRank, PageRankParams};
pub use sketch::{multiday_sketch, DayBuckets};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("damping must lie strictly between 0 and 1, got {0}")]
    BadDamping(f64),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("raw value {raw} exceeds maximum {max} for {key}: maxima are stale")]
    StaleMaxima { key: String, raw: f64, max: f64 },
    #[error("invalid raw value {0}")]
    BadValue(f64),
    #[error("line {line}: {source}")]
    Dump {
        line: usize,
        #[source]
        source: RecordError,
    },
    #[error("line {0}: unknown feature key")]
    UnknownKey(usize),
}

/// Sparse `(user, key) -> value` map. Absent entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawFeatureTable {
    rows: BTreeMap<UserId, BTreeMap<FeatureKey, f64>>,
}

impl RawFeatureTable {
    pub fn get(&self, user: &UserId, key: &FeatureKey) -> f64 {
        self.rows
            .get(user)
            .and_then(|r| r.get(key))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn add(&mut self, user: &UserId, key: FeatureKey, value: f64) {
        *self
            .rows
            .entry(user.clone())
            .or_default()
            .entry(key)
            .or_insert(0.0) += value;
    }

    pub fn row(&self, user: &UserId) -> Option<&BTreeMap<FeatureKey, f64>> {
        self.rows.get(user)
    }

    /// Adds every entry of `other` into `self`.
    pub fn merge(&mut self, other: RawFeatureTable) {
        for (user, row) in other.rows {
            let mine = self.rows.entry(user).or_default();
            for (k, v) in row {
                *mine.entry(k).or_insert(0.0) += v;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, &BTreeMap<FeatureKey, f64>)> {
        self.rows.iter()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.rows.keys()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn entry_count(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }
}
