//! Normalized input records: users, interactions, profiles, graph edges and
//! pairwise labels, plus their line encodings.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

use crate::codec::{CodecError, Record};
use crate::registry::FeatureRegistry;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Window spans a dynamic feature may use, in days.
pub const WINDOW_SPANS: [u32; 7] = [3, 7, 14, 21, 30, 60, 90];

/// Span of the trailing activity window every batch is cut to.
pub const BATCH_WINDOW_DAYS: u32 = 90;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("empty user id")]
    EmptyUser,
    #[error("invalid network name {0:?}")]
    BadNetwork(String),
    #[error("invalid date {0:?}")]
    BadDate(String),
    #[error("attribute {name:?} has invalid value {value:?}")]
    BadAttribute { name: String, value: String },
}

/// Cross-network canonical profile identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Result<Self, RecordError> {
        let id = id.into();
        if id.is_empty() {
            return Err(RecordError::EmptyUser);
        }
        Ok(UserId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercase network (or community) name such as `tw` or `lt.gaming`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetworkName(String);

impl NetworkName {
    pub fn new(name: &str) -> Result<Self, RecordError> {
        let lower = name.to_ascii_lowercase();
        if !is_dimension_name(&lower) {
            return Err(RecordError::BadNetwork(name.to_string()));
        }
        Ok(NetworkName(lower))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NetworkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Names used as feature-key path segments: `[a-z0-9_.-]+`.
pub fn is_dimension_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| {
            b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-')
        })
}

/// A profile id together with its network-local account ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserIdentity {
    pub profile_id: UserId,
    pub network_ids: BTreeMap<NetworkName, String>,
}

impl UserIdentity {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new().with("user", &self.profile_id);
        for (net, id) in &self.network_ids {
            r.push(format!("net.{net}"), id);
        }
        r
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        r.expect_only(&["user"], &["net."])?;
        let profile_id = UserId::new(r.require("user")?)?;
        let mut network_ids = BTreeMap::new();
        for (k, v) in r.fields() {
            if let Some(net) = k.strip_prefix("net.") {
                let name = NetworkName::new(net)?;
                if name.as_str() != net || network_ids.insert(name, v.to_string()).is_some() {
                    return Err(RecordError::BadNetwork(net.to_string()));
                }
            }
        }
        Ok(UserIdentity {
            profile_id,
            network_ids,
        })
    }
}

/// One reaction: `actor` reacted with `action` to a piece of `content_type`
/// content that `author` posted on `network`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InteractionEvent {
    pub actor: UserId,
    pub author: UserId,
    pub network: NetworkName,
    pub content_type: String,
    pub action: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

impl InteractionEvent {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("actor", &self.actor)
            .with("author", &self.author)
            .with("network", &self.network)
            .with("content_type", &self.content_type)
            .with("action", &self.action)
            .with("timestamp", self.timestamp)
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        r.expect_only(
            &[
                "actor",
                "author",
                "network",
                "content_type",
                "action",
                "timestamp",
            ],
            &[],
        )?;
        Ok(InteractionEvent {
            actor: UserId::new(r.require("actor")?)?,
            author: UserId::new(r.require("author")?)?,
            network: NetworkName::new(r.require("network")?)?,
            content_type: r.require("content_type")?.to_string(),
            action: r.require("action")?.to_string(),
            timestamp: r.parse_field("timestamp")?,
        })
    }

    pub fn parse_line(line: &str) -> Result<Self, RecordError> {
        Self::from_record(&Record::parse(line)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSnapshot {
    pub user: UserId,
    pub network: NetworkName,
    pub as_of: NaiveDate,
    pub numeric_attrs: BTreeMap<String, f64>,
    pub categorical_attrs: BTreeMap<String, String>,
}

impl ProfileSnapshot {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new()
            .with("user", &self.user)
            .with("network", &self.network)
            .with("as_of", self.as_of.format("%Y-%m-%d"));
        for (k, v) in &self.numeric_attrs {
            r.push(format!("num.{k}"), v);
        }
        for (k, v) in &self.categorical_attrs {
            r.push(format!("cat.{k}"), v);
        }
        r
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        r.expect_only(&["user", "network", "as_of"], &["num.", "cat."])?;
        let as_of_raw = r.require("as_of")?;
        let as_of = NaiveDate::parse_from_str(as_of_raw, "%Y-%m-%d")
            .map_err(|_| RecordError::BadDate(as_of_raw.to_string()))?;
        let mut numeric_attrs = BTreeMap::new();
        let mut categorical_attrs = BTreeMap::new();
        for (k, v) in r.fields() {
            if let Some(name) = k.strip_prefix("num.") {
                let value: f64 = v.parse().map_err(|_| bad_attr(name, v))?;
                if !value.is_finite() || value < 0.0 || !is_dimension_name(name) {
                    return Err(bad_attr(name, v));
                }
                // -0.0 would survive parsing but re-encode differently
                numeric_attrs.insert(name.to_string(), value + 0.0);
            } else if let Some(name) = k.strip_prefix("cat.") {
                if !is_dimension_name(name) {
                    return Err(bad_attr(name, v));
                }
                categorical_attrs.insert(name.to_string(), v.to_string());
            }
        }
        for name in numeric_attrs.keys() {
            if categorical_attrs.contains_key(name) {
                return Err(bad_attr(name, "numeric and categorical"));
            }
        }
        Ok(ProfileSnapshot {
            user: UserId::new(r.require("user")?)?,
            network: NetworkName::new(r.require("network")?)?,
            as_of,
            numeric_attrs,
            categorical_attrs,
        })
    }

    pub fn parse_line(line: &str) -> Result<Self, RecordError> {
        Self::from_record(&Record::parse(line)?)
    }
}

fn bad_attr(name: &str, value: &str) -> RecordError {
    RecordError::BadAttribute {
        name: name.to_string(),
        value: value.to_string(),
    }
}

/// Directed edge `from -> to` in one network's graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphEdge {
    pub from: UserId,
    pub to: UserId,
    pub network: NetworkName,
}

impl GraphEdge {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("from", &self.from)
            .with("to", &self.to)
            .with("network", &self.network)
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        r.expect_only(&["from", "to", "network"], &[])?;
        Ok(GraphEdge {
            from: UserId::new(r.require("from")?)?,
            to: UserId::new(r.require("to")?)?,
            network: NetworkName::new(r.require("network")?)?,
        })
    }

    pub fn parse_line(line: &str) -> Result<Self, RecordError> {
        Self::from_record(&Record::parse(line)?)
    }
}

/// One human judgment between two users of the same network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairwiseLabel {
    pub network: NetworkName,
    pub user_a: UserId,
    pub user_b: UserId,
    pub votes_a: u32,
    pub votes_b: u32,
}

impl PairwiseLabel {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("network", &self.network)
            .with("user_a", &self.user_a)
            .with("user_b", &self.user_b)
            .with("votes_a", self.votes_a)
            .with("votes_b", self.votes_b)
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        r.expect_only(&["network", "user_a", "user_b", "votes_a", "votes_b"], &[])?;
        Ok(PairwiseLabel {
            network: NetworkName::new(r.require("network")?)?,
            user_a: UserId::new(r.require("user_a")?)?,
            user_b: UserId::new(r.require("user_b")?)?,
            votes_a: r.parse_field("votes_a")?,
            votes_b: r.parse_field("votes_b")?,
        })
    }

    pub fn parse_line(line: &str) -> Result<Self, RecordError> {
        Self::from_record(&Record::parse(line)?)
    }
}

/// Trailing window ending at `reference_time` and spanning `span_days` days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub reference_time: i64,
    pub span_days: u32,
}

impl TimeWindow {
    pub fn new(reference_time: i64, span_days: u32) -> Option<Self> {
        (reference_time > 0 && WINDOW_SPANS.contains(&span_days)).then_some(TimeWindow {
            reference_time,
            span_days,
        })
    }

    pub fn batch(reference_time: i64) -> Option<Self> {
        Self::new(reference_time, BATCH_WINDOW_DAYS)
    }

    pub fn start(&self) -> i64 {
        self.reference_time - i64::from(self.span_days) * SECONDS_PER_DAY
    }

    /// An event exactly `span_days` old is outside the window; one second
    /// younger is inside. Events at or after the reference time are outside.
    pub fn contains(&self, timestamp: i64) -> bool {
        timestamp > self.start() && timestamp < self.reference_time
    }

    /// Whole days between `timestamp` and the reference time.
    pub fn day_index(&self, timestamp: i64) -> i64 {
        (self.reference_time - timestamp).div_euclid(SECONDS_PER_DAY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    UnknownNetwork,
    UnknownContentType,
    UnknownAction,
    SelfReaction,
    BadTimestamp,
}

impl Rejection {
    pub const ALL: [Rejection; 5] = [
        Rejection::UnknownNetwork,
        Rejection::UnknownContentType,
        Rejection::UnknownAction,
        Rejection::SelfReaction,
        Rejection::BadTimestamp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Rejection::UnknownNetwork => "unknown-network",
            Rejection::UnknownContentType => "unknown-content-type",
            Rejection::UnknownAction => "unknown-action",
            Rejection::SelfReaction => "self-reaction",
            Rejection::BadTimestamp => "bad-timestamp",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Checks an event against the registry. Valid events come back unchanged.
pub fn validate_event(
    raw: InteractionEvent,
    registry: &FeatureRegistry,
) -> Result<InteractionEvent, Rejection> {
    let Some(spec) = registry.network(&raw.network) else {
        return Err(Rejection::UnknownNetwork);
    };
    if raw.actor == raw.author {
        return Err(Rejection::SelfReaction);
    }
    if raw.timestamp <= 0 {
        return Err(Rejection::BadTimestamp);
    }
    if !spec.content_types.contains(&raw.content_type) {
        return Err(Rejection::UnknownContentType);
    }
    if !spec.actions.contains(&raw.action) {
        return Err(Rejection::UnknownAction);
    }
    Ok(raw)
}
