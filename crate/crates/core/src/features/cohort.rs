use std::collections::HashMap;

use crate::event::{InteractionEvent, NetworkName, UserId, BATCH_WINDOW_DAYS, SECONDS_PER_DAY};
use crate::registry::Cohort;

pub const DEFAULT_PEER_BAND: f64 = 5.0;

/// Prior-run scores used to place each reactor in the author's audience
/// cohorts.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortContext {
    prior_scores: HashMap<UserId, f64>,
    peer_band: f64,
}

impl CohortContext {
    /// No prior scores: every reaction lands in `all` only.
    pub fn bootstrap() -> Self {
        CohortContext {
            prior_scores: HashMap::new(),
            peer_band: DEFAULT_PEER_BAND,
        }
    }

    /// `peer_band` must be positive and finite.
    pub fn new(prior_scores: HashMap<UserId, f64>, peer_band: f64) -> Option<Self> {
        (peer_band.is_finite() && peer_band > 0.0).then_some(CohortContext {
            prior_scores,
            peer_band,
        })
    }

    pub fn peer_band(&self) -> f64 {
        self.peer_band
    }

    pub fn prior_score(&self, user: &UserId) -> Option<f64> {
        self.prior_scores.get(user).copied()
    }
}

/// Aggregation key without the window dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DayKey<'a> {
    pub author: &'a UserId,
    pub network: &'a NetworkName,
    pub content_type: &'a str,
    pub action: &'a str,
    pub cohort: Cohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission<'a> {
    pub key: DayKey<'a>,
    pub day_index: u16,
}

/// Emits one record per cohort the reaction belongs to: always `all`, plus
/// `peers` when the two prior scores are within the peer band, or `higher`
/// when the actor's score exceeds the author's by more than the band.
/// Without prior scores for both users only `all` is emitted. Events outside
/// the 90-day window emit nothing.
pub fn conditional_emit<'a>(
    event: &'a InteractionEvent,
    cohorts: &CohortContext,
    reference_time: i64,
) -> Vec<Emission<'a>> {
    let age = reference_time - event.timestamp;
    if age <= 0 || age >= i64::from(BATCH_WINDOW_DAYS) * SECONDS_PER_DAY {
        return Vec::new();
    }
    let day_index = (age / SECONDS_PER_DAY) as u16;
    let emit = |cohort| Emission {
        key: DayKey {
            author: &event.author,
            network: &event.network,
            content_type: &event.content_type,
            action: &event.action,
            cohort,
        },
        day_index,
    };
    let mut out = vec![emit(Cohort::All)];
    if let (Some(actor), Some(author)) = (
        cohorts.prior_score(&event.actor),
        cohorts.prior_score(&event.author),
    ) {
        if (actor - author).abs() <= cohorts.peer_band {
            out.push(emit(Cohort::Peers));
        } else if actor > author {
            out.push(emit(Cohort::Higher));
        }
    }
    out
}
