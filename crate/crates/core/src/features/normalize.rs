use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{FeatureError, RawFeatureTable};
use crate::event::{NetworkName, UserId};
use crate::registry::{FeatureKey, FeatureRegistry};

/// Population-wide maximum of every feature key. Registry keys nobody has
/// are present with maximum 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalMaxima {
    values: BTreeMap<FeatureKey, f64>,
}

impl GlobalMaxima {
    pub fn get(&self, key: &FeatureKey) -> f64 {
        self.values.get(key).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, f64)> {
        self.values.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observe(&mut self, key: &FeatureKey, value: f64) {
        match self.values.get_mut(key) {
            Some(m) => *m = m.max(value),
            None => {
                self.values.insert(key.clone(), value.max(0.0));
            }
        }
    }

    /// Element-wise maximum.
    pub fn merge(&mut self, other: &GlobalMaxima) {
        for (k, v) in other.iter() {
            self.observe(k, v);
        }
    }
}

impl FromIterator<(FeatureKey, f64)> for GlobalMaxima {
    fn from_iter<I: IntoIterator<Item = (FeatureKey, f64)>>(iter: I) -> Self {
        let mut m = GlobalMaxima::default();
        for (k, v) in iter {
            m.observe(&k, v);
        }
        m
    }
}

pub fn compute_global_maxima(table: &RawFeatureTable, registry: &FeatureRegistry) -> GlobalMaxima {
    let rows: Vec<_> = table.iter().collect();
    let mut maxima = rows
        .par_chunks(256)
        .map(|chunk| {
            let mut m = GlobalMaxima::default();
            for (_, row) in chunk {
                for (k, &v) in row.iter() {
                    m.observe(k, v);
                }
            }
            m
        })
        .reduce(GlobalMaxima::default, |mut a, b| {
            a.merge(&b);
            a
        });
    for spec in registry.networks() {
        if let Some(layout) = registry.layout(&spec.name) {
            for k in layout.keys() {
                maxima.observe(k, 0.0);
            }
        }
    }
    maxima
}

/// `ln(1 + raw) / ln(1 + max)`, or 0 when `max` is 0. A raw value above the
/// maximum means the maxima were computed over a different population.
pub fn normalize(raw: f64, max: f64) -> Result<f64, FeatureError> {
    if !(raw >= 0.0 && raw.is_finite()) {
        return Err(FeatureError::BadValue(raw));
    }
    if raw > max {
        return Err(FeatureError::StaleMaxima {
            key: String::new(),
            raw,
            max,
        });
    }
    if max == 0.0 {
        return Ok(0.0);
    }
    Ok(raw.ln_1p() / max.ln_1p())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFeatureVector {
    pub user: UserId,
    pub network: NetworkName,
    pub entries: Vec<f64>,
}

/// Dense normalized vectors for every member of one network, aligned to the
/// network's frozen key layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFeatures {
    pub network: NetworkName,
    pub layout_hash: String,
    pub keys: Vec<FeatureKey>,
    pub vectors: BTreeMap<UserId, Vec<f64>>,
}

impl NetworkFeatures {
    pub fn vector(&self, user: &UserId) -> Option<&[f64]> {
        self.vectors.get(user).map(Vec::as_slice)
    }

    pub fn to_vector(&self, user: &UserId) -> Option<NormalizedFeatureVector> {
        self.vectors.get(user).map(|v| NormalizedFeatureVector {
            user: user.clone(),
            network: self.network.clone(),
            entries: v.clone(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    pub networks: BTreeMap<NetworkName, NetworkFeatures>,
}

impl FeatureStore {
    pub fn network(&self, name: &NetworkName) -> Option<&NetworkFeatures> {
        self.networks.get(name)
    }

    pub fn vector_count(&self) -> usize {
        self.networks.values().map(|n| n.vectors.len()).sum()
    }
}

/// Normalizes the raw table into one dense vector per (member, network).
/// A user is a member of a network if `memberships` lists them there or the
/// table holds any value for one of the network's keys.
pub fn build_feature_store(
    table: &RawFeatureTable,
    maxima: &GlobalMaxima,
    registry: &FeatureRegistry,
    memberships: &BTreeMap<NetworkName, BTreeSet<UserId>>,
) -> Result<FeatureStore, FeatureError> {
    let mut members = memberships.clone();
    for (user, row) in table.iter() {
        for k in row.keys() {
            members
                .entry(k.network().clone())
                .or_default()
                .insert(user.clone());
        }
    }

    let mut store = FeatureStore::default();
    for spec in registry.networks() {
        let Some(layout) = registry.layout(&spec.name) else {
            continue;
        };
        let Some(users) = members.get(&spec.name) else {
            continue;
        };
        let keys = layout.keys();
        let maxes: Vec<f64> = keys.iter().map(|k| maxima.get(k)).collect();
        let users: Vec<&UserId> = users.iter().collect();
        let vectors = users
            .par_iter()
            .map(|&user| {
                let mut v = vec![0.0; keys.len()];
                if let Some(row) = table.row(user) {
                    for (i, k) in keys.iter().enumerate() {
                        if let Some(&raw) = row.get(k) {
                            v[i] = normalize(raw, maxes[i]).map_err(|e| match e {
                                FeatureError::StaleMaxima { raw, max, .. } => {
                                    FeatureError::StaleMaxima {
                                        key: k.to_string(),
                                        raw,
                                        max,
                                    }
                                }
                                other => other,
                            })?;
                        }
                    }
                }
                Ok((user.clone(), v))
            })
            .collect::<Result<BTreeMap<_, _>, FeatureError>>()?;
        store.networks.insert(
            spec.name.clone(),
            NetworkFeatures {
                network: spec.name.clone(),
                layout_hash: layout.hash().to_string(),
                keys: keys.to_vec(),
                vectors,
            },
        );
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uid(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn net(s: &str) -> NetworkName {
        NetworkName::new(s).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(normalize(0.0, 42.0).unwrap(), 0.0);
        assert_eq!(normalize(17.0, 17.0).unwrap(), 1.0);
        assert!((normalize(9.0, 99.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            normalize(5.0, 4.0),
            Err(FeatureError::StaleMaxima { .. })
        ));
        assert!(matches!(
            normalize(-1.0, 4.0),
            Err(FeatureError::BadValue(_))
        ));
    }

    #[test]
    fn maxima_cover_registry_and_observed_values() {
        let reg = FeatureRegistry::default_config();
        let key = FeatureKey::longlasting(&net("tw"), "followers");
        let mut t = RawFeatureTable::default();
        for (u, v) in [("a", 3.0), ("b", 7.0), ("c", 2.0)] {
            t.add(&uid(u), key.clone(), v);
        }
        let m = compute_global_maxima(&t, &reg);
        assert_eq!(m.get(&key), 7.0);
        let unseen = FeatureKey::longlasting(&net("fb"), "fans");
        assert_eq!(m.get(&unseen), 0.0);
        assert_eq!(
            m.len(),
            reg.dynamic_key_count() + reg.longlasting_key_count()
        );
    }

    #[test]
    fn store_vectors_are_aligned_and_bounded() {
        let reg = FeatureRegistry::default_config();
        let key = FeatureKey::longlasting(&net("tw"), "followers");
        let mut t = RawFeatureTable::default();
        t.add(&uid("a"), key.clone(), 99.0);
        t.add(&uid("b"), key.clone(), 9.0);
        let m = compute_global_maxima(&t, &reg);
        let mut members = BTreeMap::new();
        members.insert(net("tw"), BTreeSet::from([uid("c")]));
        let store = build_feature_store(&t, &m, &reg, &members).unwrap();
        let tw = store.network(&net("tw")).unwrap();
        let pos = reg.layout(&net("tw")).unwrap().position(&key).unwrap();
        assert_eq!(tw.vectors.len(), 3);
        assert_eq!(tw.vector(&uid("a")).unwrap()[pos], 1.0);
        assert!((tw.vector(&uid("b")).unwrap()[pos] - 0.5).abs() < 1e-15);
        assert!(tw.vector(&uid("c")).unwrap().iter().all(|&x| x == 0.0));
        assert_eq!(
            tw.vector(&uid("a")).unwrap().len(),
            reg.layout(&net("tw")).unwrap().len()
        );
        assert!(store.network(&net("fb")).is_none());
    }

    #[test]
    fn stale_maxima_are_fatal() {
        let reg = FeatureRegistry::default_config();
        let key = FeatureKey::longlasting(&net("tw"), "followers");
        let mut t = RawFeatureTable::default();
        t.add(&uid("a"), key.clone(), 10.0);
        let m: GlobalMaxima = [(key, 5.0)].into_iter().collect();
        let err = build_feature_store(&t, &m, &reg, &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("ll/tw/followers"));
    }

    proptest! {
        #[test]
        fn normalize_is_monotone_and_bounded(a in 0.0f64..1e6, b in 0.0f64..1e6, extra in 0.0f64..1e6) {
            let max = a.max(b) + extra;
            let (na, nb) = (normalize(a, max).unwrap(), normalize(b, max).unwrap());
            prop_assert!((0.0..=1.0).contains(&na));
            if a < b && max > 0.0 {
                prop_assert!(na < nb);
            }
        }

        #[test]
        fn maxima_invariant_under_partitioning(values in proptest::collection::vec((0usize..20, 0usize..3, 0.0f64..100.0), 0..60), split in 1usize..5) {
            let reg = FeatureRegistry::default_config();
            let keys = ["followers", "friends"].map(|a| FeatureKey::longlasting(&net("tw"), a));
            let mut whole = RawFeatureTable::default();
            let mut parts = vec![RawFeatureTable::default(); split];
            for (u, k, v) in values {
                let user = uid(&format!("u{u}"));
                let key = keys[k % 2].clone();
                whole.add(&user, key.clone(), v);
                parts[u % split].add(&user, key, v);
            }
            let mut merged = GlobalMaxima::default();
            for p in &parts {
                merged.merge(&compute_global_maxima(p, &reg));
            }
            prop_assert_eq!(merged, compute_global_maxima(&whole, &reg));
        }
    }
}
