use std::collections::{BTreeMap, BTreeSet};

use super::EvalError;
use crate::codec::{is_skippable, Record};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntity {
    pub rank: usize,
    pub entity: String,
    pub score: Option<f64>,
}

/// An externally supplied ideal ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRanking {
    pub name: String,
    /// Sorted by rank; ranks run 1..=len.
    pub entries: Vec<RankedEntity>,
}

impl ReferenceRanking {
    pub fn new(name: impl Into<String>, mut entries: Vec<RankedEntity>) -> Result<Self, EvalError> {
        entries.sort_by_key(|e| e.rank);
        let mut seen = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(EvalError::BadRanking(format!(
                    "ranks are not contiguous at {}",
                    e.rank
                )));
            }
            if !seen.insert(e.entity.as_str()) {
                return Err(EvalError::BadRanking(format!(
                    "duplicate entity {:?}",
                    e.entity
                )));
            }
        }
        Ok(ReferenceRanking {
            name: name.into(),
            entries,
        })
    }

    /// Lines `rank=<n>\tentity=<name>` with an optional `score=<x>`.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, EvalError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !is_skippable(l)) {
            let err = |e: String| EvalError::BadRanking(format!("line {}: {e}", i + 1));
            let r = Record::parse(line).map_err(|e| err(e.to_string()))?;
            r.expect_only(&["rank", "entity", "score"], &[])
                .map_err(|e| err(e.to_string()))?;
            let score = match r.get("score") {
                Some(_) => Some(
                    r.parse_field::<f64>("score")
                        .map_err(|e| err(e.to_string()))?,
                ),
                None => None,
            };
            entries.push(RankedEntity {
                rank: r.parse_field("rank").map_err(|e| err(e.to_string()))?,
                entity: r
                    .require("entity")
                    .map_err(|e| err(e.to_string()))?
                    .to_string(),
                score,
            });
        }
        Self::new(name, entries)
    }

    /// Entities by descending external score, ties broken by reference rank.
    /// `None` if any entity has no score.
    pub fn order_by_score(&self) -> Option<Vec<&str>> {
        let mut scored: Vec<(f64, usize, &str)> = self
            .entries
            .iter()
            .map(|e| e.score.map(|s| (s, e.rank, e.entity.as_str())))
            .collect::<Option<_>>()?;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Some(scored.into_iter().map(|x| x.2).collect())
    }

    /// `rel = p / rank_ideal` for every entity.
    pub fn relevance(&self, p: usize) -> BTreeMap<&str, f64> {
        self.entries
            .iter()
            .map(|e| (e.entity.as_str(), p as f64 / e.rank as f64))
            .collect()
    }
}

/// `sum_{i=1..p} (2^rel_i - 1) / log2(i + 1)` over the first `p` entries.
pub fn dcg(rels: &[f64], p: usize) -> Result<f64, EvalError> {
    if rels.len() < p {
        return Err(EvalError::ShortList { len: rels.len(), p });
    }
    Ok(rels[..p]
        .iter()
        .enumerate()
        .map(|(i, &rel)| (rel.exp2() - 1.0) / ((i + 2) as f64).log2())
        .sum())
}

/// DCG of `evaluated` over DCG of the reference order, both at cutoff `p`.
pub fn ndcg(reference: &ReferenceRanking, evaluated: &[&str], p: usize) -> Result<f64, EvalError> {
    let rel = reference.relevance(p);
    let mut seen = BTreeSet::new();
    let mut rels = Vec::with_capacity(evaluated.len());
    for &e in evaluated {
        let r = *rel
            .get(e)
            .ok_or_else(|| EvalError::UnknownEntity(e.to_string()))?;
        if !seen.insert(e) {
            return Err(EvalError::BadRanking(format!(
                "duplicate entity {e:?} in evaluated order"
            )));
        }
        rels.push(r);
    }
    if let Some(missing) = reference
        .entries
        .iter()
        .find(|x| !seen.contains(x.entity.as_str()))
    {
        return Err(EvalError::UnknownEntity(missing.entity.clone()));
    }
    let ideal: Vec<f64> = reference
        .entries
        .iter()
        .map(|e| rel[e.entity.as_str()])
        .collect();
    let idcg = dcg(&ideal, p)?;
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(&rels, p)? / idcg)
}
