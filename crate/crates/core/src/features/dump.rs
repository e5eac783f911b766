//! Line formats for raw tables, maxima and normalized vectors. Every writer
//! emits keys in canonical order so dumps from two runs diff cleanly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::normalize::{FeatureStore, GlobalMaxima, NetworkFeatures};
use super::{FeatureError, RawFeatureTable};
use crate::codec::{is_skippable, Record};
use crate::event::{NetworkName, RecordError, UserId};
use crate::registry::{FeatureKey, FeatureRegistry};

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !is_skippable(l))
}

fn record(line_no: usize, line: &str) -> Result<Record, FeatureError> {
    Record::parse(line).map_err(|e| FeatureError::Dump {
        line: line_no,
        source: RecordError::from(e),
    })
}

fn field<T: std::str::FromStr>(r: &Record, line: usize, key: &str) -> Result<T, FeatureError> {
    r.parse_field(key).map_err(|e| FeatureError::Dump {
        line,
        source: RecordError::from(e),
    })
}

fn value_field(r: &Record, line: usize, key: &str) -> Result<f64, FeatureError> {
    let v: f64 = field(r, line, key)?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(FeatureError::BadValue(v))
    }
}

fn user_field(r: &Record, line: usize) -> Result<UserId, FeatureError> {
    let raw: String = field(r, line, "user")?;
    UserId::new(raw).map_err(|source| FeatureError::Dump { line, source })
}

fn feature_key(raw: &str, line: usize) -> Result<FeatureKey, FeatureError> {
    raw.parse().map_err(|_| FeatureError::UnknownKey(line))
}

/// `user=<id>\tkey=<feature key>\tvalue=<raw>` per nonzero entry.
pub fn write_raw_table(table: &RawFeatureTable) -> String {
    let mut out = String::new();
    for (user, row) in table.iter() {
        for (k, v) in row {
            let r = Record::new()
                .with("user", user)
                .with("key", k)
                .with("value", v);
            writeln!(out, "{r}").unwrap();
        }
    }
    out
}

pub fn parse_raw_table(text: &str) -> Result<RawFeatureTable, FeatureError> {
    let mut table = RawFeatureTable::default();
    for (n, line) in lines(text) {
        let r = record(n, line)?;
        let user = user_field(&r, n)?;
        let key = feature_key(&field::<String>(&r, n, "key")?, n)?;
        table.add(&user, key, value_field(&r, n, "value")?);
    }
    Ok(table)
}

/// `key=<feature key>\tmax=<value>` per key, zero maxima included.
pub fn write_maxima(maxima: &GlobalMaxima) -> String {
    let mut out = String::new();
    for (k, v) in maxima.iter() {
        writeln!(out, "{}", Record::new().with("key", k).with("max", v)).unwrap();
    }
    out
}

pub fn parse_maxima(text: &str) -> Result<GlobalMaxima, FeatureError> {
    let mut pairs = Vec::new();
    for (n, line) in lines(text) {
        let r = record(n, line)?;
        let key = feature_key(&field::<String>(&r, n, "key")?, n)?;
        pairs.push((key, value_field(&r, n, "max")?));
    }
    Ok(pairs.into_iter().collect())
}

/// One line per (network, member): `network=..\tuser=..` followed by every
/// nonzero entry as `<feature key>=<value>`.
pub fn write_feature_store(store: &FeatureStore) -> String {
    let mut out = String::new();
    for (net, nf) in &store.networks {
        for (user, v) in &nf.vectors {
            let mut r = Record::new().with("network", net).with("user", user);
            for (k, x) in nf.keys.iter().zip(v) {
                if *x != 0.0 {
                    r.push(k.to_string(), x);
                }
            }
            writeln!(out, "{r}").unwrap();
        }
    }
    out
}

/// Rebuilds dense vectors against the registry's layouts. Entries must be
/// keys of the line's network with values in `[0, 1]`.
pub fn parse_feature_store(
    text: &str,
    registry: &FeatureRegistry,
) -> Result<FeatureStore, FeatureError> {
    let mut networks: BTreeMap<NetworkName, NetworkFeatures> = BTreeMap::new();
    for (n, line) in lines(text) {
        let r = record(n, line)?;
        let net_raw: String = field(&r, n, "network")?;
        let net =
            NetworkName::new(&net_raw).map_err(|source| FeatureError::Dump { line: n, source })?;
        let user = user_field(&r, n)?;
        let layout = registry.layout(&net).ok_or(FeatureError::UnknownKey(n))?;
        let mut v = vec![0.0; layout.len()];
        for (k, raw) in r.fields().filter(|(k, _)| *k != "network" && *k != "user") {
            let key = feature_key(k, n)?;
            let pos = layout.position(&key).ok_or(FeatureError::UnknownKey(n))?;
            let x: f64 = raw.parse().map_err(|_| FeatureError::UnknownKey(n))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(FeatureError::BadValue(x));
            }
            v[pos] = x;
        }
        networks
            .entry(net.clone())
            .or_insert_with(|| NetworkFeatures {
                network: net.clone(),
                layout_hash: layout.hash().to_string(),
                keys: layout.keys().to_vec(),
                vectors: BTreeMap::new(),
            })
            .vectors
            .insert(user, v);
    }
    Ok(FeatureStore { networks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::normalize::{build_feature_store, compute_global_maxima};
    use std::collections::BTreeSet;

    fn sample() -> RawFeatureTable {
        let tw = NetworkName::new("tw").unwrap();
        let mut t = RawFeatureTable::default();
        t.add(
            &UserId::new("b").unwrap(),
            FeatureKey::longlasting(&tw, "followers"),
            12.5,
        );
        t.add(
            &UserId::new("a").unwrap(),
            FeatureKey::longlasting(&tw, "friends"),
            3.0,
        );
        t.add(
            &UserId::new("a").unwrap(),
            "dyn/tw/photo/like/all/7d".parse().unwrap(),
            4.0,
        );
        t
    }

    #[test]
    fn raw_table_round_trip() {
        let t = sample();
        let text = write_raw_table(&t);
        assert!(text.starts_with("user=a\tkey=dyn/tw/photo/like/all/7d\tvalue=4\n"));
        assert_eq!(parse_raw_table(&text).unwrap(), t);
    }

    #[test]
    fn maxima_and_store_round_trip() {
        let reg = FeatureRegistry::default_config();
        let t = sample();
        let m = compute_global_maxima(&t, &reg);
        assert_eq!(parse_maxima(&write_maxima(&m)).unwrap(), m);
        let mut members = BTreeMap::new();
        members.insert(
            NetworkName::new("fb").unwrap(),
            BTreeSet::from([UserId::new("z").unwrap()]),
        );
        let store = build_feature_store(&t, &m, &reg, &members).unwrap();
        let text = write_feature_store(&store);
        assert_eq!(parse_feature_store(&text, &reg).unwrap(), store);
    }

    #[test]
    fn rejects_bad_lines() {
        let reg = FeatureRegistry::default_config();
        assert!(parse_raw_table("user=a\tkey=nope\tvalue=1").is_err());
        assert!(parse_raw_table("user=a\tkey=ll/tw/followers\tvalue=-1").is_err());
        assert!(parse_raw_table("user=a\tkey=ll/tw/followers").is_err());
        assert!(parse_feature_store("network=tw\tuser=a\tll/fb/fans=0.5", &reg).is_err());
        assert!(parse_feature_store("network=tw\tuser=a\tll/tw/followers=1.5", &reg).is_err());
        assert!(parse_feature_store("network=zz\tuser=a", &reg).is_err());
    }
}
