use std::fmt::Write as _;

use crate::codec::{is_skippable, Record};
use crate::event::UserId;
use crate::hierarchy::ScoreSnapshot;

#[derive(Debug, Clone, PartialEq)]
pub struct CohortEntry {
    pub user: String,
    /// `None` for users missing from the snapshot.
    pub score: Option<f64>,
}

/// One user id per line; blank lines and `#` comments are skipped.
pub fn parse_user_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !is_skippable(l))
        .map(str::to_string)
        .collect()
}

/// Scored users by descending score, ties by id; then unscored users in
/// input order. Repeated ids are listed once.
pub fn rank_cohort(snapshot: &ScoreSnapshot, users: &[String]) -> Vec<CohortEntry> {
    let mut seen = std::collections::HashSet::new();
    let (mut scored, mut unscored) = (Vec::new(), Vec::new());
    for u in users.iter().filter(|u| seen.insert(u.as_str())) {
        let score = UserId::new(u.as_str())
            .ok()
            .and_then(|id| snapshot.overall(&id));
        let entry = CohortEntry {
            user: u.clone(),
            score,
        };
        if score.is_some() {
            scored.push(entry);
        } else {
            unscored.push(entry);
        }
    }
    scored.sort_by(|a, b| {
        b.score
            .unwrap()
            .total_cmp(&a.score.unwrap())
            .then_with(|| a.user.cmp(&b.user))
    });
    scored.extend(unscored);
    scored
}

/// `rank=<n>\tuser=<id>\tscore=<s>`; unscored users carry `score=none`.
pub fn write_cohort(entries: &[CohortEntry]) -> String {
    let mut out = String::new();
    for (i, e) in entries.iter().enumerate() {
        let score = e
            .score
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        let r = Record::new()
            .with("rank", i + 1)
            .with("user", &e.user)
            .with("score", score);
        writeln!(out, "{r}").unwrap();
    }
    out
}
