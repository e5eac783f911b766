use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use chrono::NaiveDate;

use super::HierarchyError;
use crate::codec::{is_skippable, Record};
use crate::event::UserId;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    /// `100 * raw`.
    pub overall: f64,
    pub raw: f64,
    /// Scores of the tree nodes the user is present in.
    pub nodes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSnapshot {
    pub as_of: NaiveDate,
    pub entries: BTreeMap<UserId, ScoreEntry>,
}

impl ScoreSnapshot {
    pub fn overall(&self, user: &UserId) -> Option<f64> {
        self.entries.get(user).map(|e| e.overall)
    }

    /// Overall scores, as used for the next run's audience cohorts.
    pub fn prior_scores(&self) -> HashMap<UserId, f64> {
        self.entries
            .iter()
            .map(|(u, e)| (u.clone(), e.overall))
            .collect()
    }
}

const NODE_PREFIX: &str = "node.";

/// Header `as_of=<date>\tusers=<n>`, then one line per user:
/// `user=..\tscore=..\traw=..` followed by `node.<id>=..` per present node.
pub fn write_snapshot(snapshot: &ScoreSnapshot) -> String {
    let header = Record::new()
        .with("as_of", snapshot.as_of.format("%Y-%m-%d"))
        .with("users", snapshot.entries.len());
    let mut out = format!("{header}\n");
    for (user, e) in &snapshot.entries {
        let mut r = Record::new()
            .with("user", user)
            .with("score", e.overall)
            .with("raw", e.raw);
        for (id, s) in &e.nodes {
            r.push(format!("{NODE_PREFIX}{id}"), s);
        }
        writeln!(out, "{r}").unwrap();
    }
    out
}

fn bad(line: usize, msg: impl ToString) -> HierarchyError {
    HierarchyError::Snapshot {
        line,
        msg: msg.to_string(),
    }
}

fn unit(v: f64, line: usize) -> Result<f64, HierarchyError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(bad(line, format!("score {v} outside [0, 1]")))
    }
}

pub fn parse_snapshot(text: &str) -> Result<ScoreSnapshot, HierarchyError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !is_skippable(l));
    let (n, first) = lines.next().ok_or_else(|| bad(1, "empty snapshot"))?;
    let header = Record::parse(first).map_err(|e| bad(n, e))?;
    header
        .expect_only(&["as_of", "users"], &[])
        .map_err(|e| bad(n, e))?;
    let as_of =
        NaiveDate::parse_from_str(header.require("as_of").map_err(|e| bad(n, e))?, "%Y-%m-%d")
            .map_err(|e| bad(n, e))?;
    let declared: usize = header.parse_field("users").map_err(|e| bad(n, e))?;

    let mut entries = BTreeMap::new();
    for (n, line) in lines {
        let r = Record::parse(line).map_err(|e| bad(n, e))?;
        r.expect_only(&["user", "score", "raw"], &[NODE_PREFIX])
            .map_err(|e| bad(n, e))?;
        let user = UserId::new(r.require("user").map_err(|e| bad(n, e))?).map_err(|e| bad(n, e))?;
        let raw = unit(r.parse_field("raw").map_err(|e| bad(n, e))?, n)?;
        let overall: f64 = r.parse_field("score").map_err(|e| bad(n, e))?;
        if (overall - 100.0 * raw).abs() > 1e-9 {
            return Err(bad(n, "score is not 100 times raw"));
        }
        let mut nodes = BTreeMap::new();
        for (k, v) in r.fields() {
            if let Some(id) = k.strip_prefix(NODE_PREFIX) {
                let v: f64 = v
                    .parse()
                    .map_err(|_| bad(n, format!("invalid node score {v:?}")))?;
                nodes.insert(id.to_string(), unit(v, n)?);
            }
        }
        if entries
            .insert(
                user,
                ScoreEntry {
                    overall,
                    raw,
                    nodes,
                },
            )
            .is_some()
        {
            return Err(bad(n, "duplicate user"));
        }
    }
    if entries.len() != declared {
        return Err(bad(
            n,
            format!("header declares {declared} users, found {}", entries.len()),
        ));
    }
    Ok(ScoreSnapshot { as_of, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot() -> ScoreSnapshot {
        let mut entries = BTreeMap::new();
        entries.insert(
            UserId::new("alice").unwrap(),
            ScoreEntry {
                overall: 100.0 * std::f64::consts::FRAC_1_SQRT_2,
                raw: std::f64::consts::FRAC_1_SQRT_2,
                nodes: BTreeMap::from([
                    ("root".into(), std::f64::consts::FRAC_1_SQRT_2),
                    ("tw".into(), 0.6),
                    ("lt.gaming".into(), 0.8),
                ]),
            },
        );
        entries.insert(
            UserId::new("bob").unwrap(),
            ScoreEntry {
                overall: 0.0,
                raw: 0.0,
                nodes: BTreeMap::from([("root".into(), 0.0)]),
            },
        );
        ScoreSnapshot {
            as_of: NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(),
            entries,
        }
    }

    #[test]
    fn round_trip() {
        let s = snapshot();
        let text = write_snapshot(&s);
        assert!(text.starts_with("as_of=2024-03-01\tusers=2\n"));
        assert_eq!(parse_snapshot(&text).unwrap(), s);
        assert_eq!(write_snapshot(&parse_snapshot(&text).unwrap()), text);
        assert_eq!(s.prior_scores()[&UserId::new("bob").unwrap()], 0.0);
    }

    #[test]
    fn rejects_inconsistent_lines() {
        let head = "as_of=2024-03-01\tusers=1\n";
        for body in [
            "user=a\tscore=50\traw=0.4",
            "user=a\tscore=150\traw=1.5",
            "user=a\tscore=50\traw=0.5\tnode.tw=2",
            "user=a\tscore=50\traw=0.5\tother=1",
            "user=a\tscore=50",
        ] {
            assert!(
                parse_snapshot(&format!("{head}{body}\n")).is_err(),
                "{body}"
            );
        }
        assert!(parse_snapshot("as_of=2024-03-01\tusers=2\nuser=a\tscore=50\traw=0.5\n").is_err());
        assert!(parse_snapshot("as_of=yesterday\tusers=0\n").is_err());
        assert!(parse_snapshot("").is_err());
    }
}
