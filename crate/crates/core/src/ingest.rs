//! Batch loading: parse input files, validate, cut to the trailing window,
//! deduplicate, and group events by author.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{is_skippable, Record};
use crate::event::{
    validate_event, GraphEdge, InteractionEvent, NetworkName, PairwiseLabel, ProfileSnapshot,
    RecordError, Rejection, TimeWindow, UserId, UserIdentity,
};
use crate::registry::FeatureRegistry;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reference time {0} is not a valid positive timestamp")]
    BadReferenceTime(i64),
    #[error("shard count must be at least 1")]
    ZeroShards,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InputPaths {
    pub events: Vec<PathBuf>,
    pub profiles: Vec<PathBuf>,
    pub edges: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub identities: Vec<PathBuf>,
}

impl InputPaths {
    pub fn all(&self) -> impl Iterator<Item = &PathBuf> {
        self.events
            .iter()
            .chain(&self.profiles)
            .chain(&self.edges)
            .chain(&self.labels)
            .chain(&self.identities)
    }
}

/// Validated, windowed, deduplicated input for one scoring run.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestBatch {
    pub reference_time: i64,
    /// Events grouped by author; each group sorted.
    pub events: BTreeMap<UserId, Vec<InteractionEvent>>,
    /// Latest snapshot per (user, network) not dated after the reference date.
    pub profiles: BTreeMap<(UserId, NetworkName), ProfileSnapshot>,
    pub edges: Vec<GraphEdge>,
    pub labels: Vec<PairwiseLabel>,
    pub identities: BTreeMap<UserId, UserIdentity>,
}

impl IngestBatch {
    pub fn empty(reference_time: i64) -> Self {
        IngestBatch {
            reference_time,
            events: BTreeMap::new(),
            profiles: BTreeMap::new(),
            edges: Vec::new(),
            labels: Vec::new(),
            identities: BTreeMap::new(),
        }
    }

    pub fn event_count(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }

    pub fn all_events(&self) -> impl Iterator<Item = &InteractionEvent> {
        self.events.values().flatten()
    }

    /// Users with any record on each network: event participants, profile
    /// owners, edge endpoints and declared account ids.
    pub fn memberships(&self) -> BTreeMap<NetworkName, BTreeSet<UserId>> {
        let mut members: BTreeMap<NetworkName, BTreeSet<UserId>> = BTreeMap::new();
        let mut add = |net: &NetworkName, u: &UserId| {
            members.entry(net.clone()).or_default().insert(u.clone());
        };
        for e in self.all_events() {
            add(&e.network, &e.author);
            add(&e.network, &e.actor);
        }
        for (user, net) in self.profiles.keys() {
            add(net, user);
        }
        for e in &self.edges {
            add(&e.network, &e.from);
            add(&e.network, &e.to);
        }
        for id in self.identities.values() {
            for net in id.network_ids.keys() {
                add(net, &id.profile_id);
            }
        }
        members
    }
}

/// Accepted/rejected counts keyed by `<kind>.<outcome>`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    counts: BTreeMap<String, u64>,
}

impl LoadReport {
    fn bump(&mut self, key: impl Into<String>) {
        *self.counts.entry(key.into()).or_insert(0) += 1;
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    /// One machine-readable line: `report=load` followed by every count.
    pub fn summary_line(&self) -> String {
        let mut r = Record::new().with("report", "load");
        for (k, v) in &self.counts {
            r.push(k.clone(), v);
        }
        r.to_string()
    }
}

/// Incremental batch assembly. Feed parsed records or raw lines, then
/// [`finish`](Self::finish).
pub struct BatchBuilder<'r> {
    registry: &'r FeatureRegistry,
    window: TimeWindow,
    reference_date: NaiveDate,
    events: BTreeSet<InteractionEvent>,
    profiles: BTreeMap<(UserId, NetworkName), (ProfileSnapshot, String)>,
    edges: BTreeSet<GraphEdge>,
    labels: Vec<PairwiseLabel>,
    identities: BTreeMap<UserId, UserIdentity>,
    report: LoadReport,
}

impl<'r> BatchBuilder<'r> {
    pub fn new(reference_time: i64, registry: &'r FeatureRegistry) -> Result<Self, IngestError> {
        let window = TimeWindow::batch(reference_time)
            .ok_or(IngestError::BadReferenceTime(reference_time))?;
        let reference_date = DateTime::from_timestamp(reference_time, 0)
            .ok_or(IngestError::BadReferenceTime(reference_time))?
            .date_naive();
        Ok(BatchBuilder {
            registry,
            window,
            reference_date,
            events: BTreeSet::new(),
            profiles: BTreeMap::new(),
            edges: BTreeSet::new(),
            labels: Vec::new(),
            identities: BTreeMap::new(),
            report: LoadReport::default(),
        })
    }

    pub fn add_event(&mut self, event: InteractionEvent) {
        let event = match validate_event(event, self.registry) {
            Ok(e) => e,
            Err(reason) => {
                self.report
                    .bump(format!("events.rejected.{}", reason.code()));
                return;
            }
        };
        if event.timestamp >= self.window.reference_time {
            self.report.bump("events.future");
        } else if !self.window.contains(event.timestamp) {
            self.report.bump("events.expired");
        } else if self.events.insert(event) {
            self.report.bump("events.accepted");
        } else {
            self.report.bump("events.duplicate");
        }
    }

    pub fn add_profile(&mut self, profile: ProfileSnapshot) {
        if self.registry.network(&profile.network).is_none() {
            self.report.bump("profiles.rejected.unknown-network");
            return;
        }
        if profile.as_of > self.reference_date {
            self.report.bump("profiles.future");
            return;
        }
        self.report.bump("profiles.read");
        let line = profile.to_record().to_string();
        let key = (profile.user.clone(), profile.network.clone());
        match self.profiles.get(&key) {
            Some((current, current_line))
                if (current.as_of, current_line.as_str()) >= (profile.as_of, line.as_str()) => {}
            _ => {
                self.profiles.insert(key, (profile, line));
            }
        }
    }

    pub fn add_edge(&mut self, edge: GraphEdge) {
        if self.registry.network(&edge.network).is_none() {
            self.report.bump("edges.rejected.unknown-network");
        } else if edge.from == edge.to {
            self.report.bump("edges.rejected.self-loop");
        } else if self.edges.insert(edge) {
            self.report.bump("edges.accepted");
        } else {
            self.report.bump("edges.duplicate");
        }
    }

    pub fn add_label(&mut self, label: PairwiseLabel) {
        if self.registry.network(&label.network).is_none() {
            self.report.bump("labels.rejected.unknown-network");
        } else if label.user_a == label.user_b {
            self.report.bump("labels.rejected.self-pair");
        } else {
            self.report.bump("labels.accepted");
            self.labels.push(label);
        }
    }

    pub fn add_identity(&mut self, identity: UserIdentity) {
        if identity
            .network_ids
            .keys()
            .any(|n| self.registry.network(n).is_none())
        {
            self.report.bump("identities.rejected.unknown-network");
            return;
        }
        match self.identities.get_mut(&identity.profile_id) {
            Some(existing) if existing != &identity => {
                self.report.bump("identities.rejected.conflict");
            }
            Some(_) => self.report.bump("identities.duplicate"),
            None => {
                self.report.bump("identities.accepted");
                self.identities
                    .insert(identity.profile_id.clone(), identity);
            }
        }
    }

    fn malformed(&mut self, kind: &str) {
        self.report.bump(format!("{kind}.malformed"));
    }

    pub fn add_event_line(&mut self, line: &str) {
        match InteractionEvent::parse_line(line) {
            Ok(e) => self.add_event(e),
            Err(_) => self.malformed("events"),
        }
    }

    pub fn add_profile_line(&mut self, line: &str) {
        match ProfileSnapshot::parse_line(line) {
            Ok(p) => self.add_profile(p),
            Err(_) => self.malformed("profiles"),
        }
    }

    pub fn add_edge_line(&mut self, line: &str) {
        match GraphEdge::parse_line(line) {
            Ok(e) => self.add_edge(e),
            Err(_) => self.malformed("edges"),
        }
    }

    pub fn add_label_line(&mut self, line: &str) {
        match PairwiseLabel::parse_line(line) {
            Ok(l) => self.add_label(l),
            Err(_) => self.malformed("labels"),
        }
    }

    pub fn add_identity_line(&mut self, line: &str) {
        match Record::parse(line)
            .map_err(RecordError::from)
            .and_then(|r| UserIdentity::from_record(&r))
        {
            Ok(id) => self.add_identity(id),
            Err(_) => self.malformed("identities"),
        }
    }

    pub fn finish(self) -> (IngestBatch, LoadReport) {
        let mut events: BTreeMap<UserId, Vec<InteractionEvent>> = BTreeMap::new();
        for e in self.events {
            events.entry(e.author.clone()).or_default().push(e);
        }
        let mut labels = self.labels;
        labels.sort();
        let batch = IngestBatch {
            reference_time: self.window.reference_time,
            events,
            profiles: self
                .profiles
                .into_iter()
                .map(|(k, (p, _))| (k, p))
                .collect(),
            edges: self.edges.into_iter().collect(),
            labels,
            identities: self.identities,
        };
        (batch, self.report)
    }
}

fn read_lines(paths: &[PathBuf]) -> Result<Vec<String>, IngestError> {
    let texts: Vec<Result<String, IngestError>> = paths.par_iter().map(|p| read_file(p)).collect();
    let mut lines = Vec::new();
    for text in texts {
        lines.extend(
            text?
                .lines()
                .filter(|l| !is_skippable(l))
                .map(str::to_string),
        );
    }
    Ok(lines)
}

pub(crate) fn read_file(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every input file into a batch. Unreadable files are fatal; lines
/// that fail to parse are counted as malformed and skipped.
pub fn load_batch(
    paths: &InputPaths,
    reference_time: i64,
    registry: &FeatureRegistry,
) -> Result<(IngestBatch, LoadReport), IngestError> {
    let mut builder = BatchBuilder::new(reference_time, registry)?;
    for line in read_lines(&paths.events)? {
        builder.add_event_line(&line);
    }
    for line in read_lines(&paths.profiles)? {
        builder.add_profile_line(&line);
    }
    for line in read_lines(&paths.edges)? {
        builder.add_edge_line(&line);
    }
    for line in read_lines(&paths.labels)? {
        builder.add_label_line(&line);
    }
    for line in read_lines(&paths.identities)? {
        builder.add_identity_line(&line);
    }
    Ok(builder.finish())
}

/// A subset of authors and all of their events.
pub type EventShard<'a> = Vec<(&'a UserId, &'a [InteractionEvent])>;

/// Splits the batch's authors into `shards` disjoint groups. Authors are
/// dealt round-robin in sorted order, so the assignment is deterministic.
pub fn partition_by_author(
    batch: &IngestBatch,
    shards: usize,
) -> Result<Vec<EventShard<'_>>, IngestError> {
    if shards == 0 {
        return Err(IngestError::ZeroShards);
    }
    let mut out: Vec<EventShard<'_>> = vec![Vec::new(); shards];
    for (i, (author, events)) in batch.events.iter().enumerate() {
        out[i % shards].push((author, events.as_slice()));
    }
    Ok(out)
}

/// All rejection codes an event can receive, for report templates.
pub fn event_rejection_codes() -> impl Iterator<Item = &'static str> {
    Rejection::ALL.iter().map(|r| r.code())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::SECONDS_PER_DAY;
    use std::io::Write;

    const REF: i64 = 1_700_000_000;

    fn ev(actor: &str, author: &str, ts: i64) -> String {
        format!("actor={actor}\tauthor={author}\tnetwork=tw\tcontent_type=message\taction=retweet\ttimestamp={ts}")
    }

    fn write(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        p
    }

    fn build(lines: &[String]) -> (IngestBatch, LoadReport) {
        let reg = FeatureRegistry::default_config();
        let mut b = BatchBuilder::new(REF, &reg).unwrap();
        for l in lines {
            b.add_event_line(l);
        }
        b.finish()
    }

    #[test]
    fn window_boundaries() {
        let (batch, report) = build(&[
            ev("a", "x", REF - 91 * SECONDS_PER_DAY),
            ev("a", "x", REF - 90 * SECONDS_PER_DAY),
            ev("b", "x", REF - 90 * SECONDS_PER_DAY + 1),
            ev("c", "x", REF - 1),
            ev("d", "x", REF),
        ]);
        assert_eq!(batch.event_count(), 2);
        assert_eq!(report.get("events.expired"), 2);
        assert_eq!(report.get("events.future"), 1);
    }

    #[test]
    fn identical_lines_collapse() {
        let line = ev("a", "x", REF - 100);
        let (batch, report) = build(&[line.clone(), line]);
        assert_eq!(batch.event_count(), 1);
        assert_eq!(report.get("events.duplicate"), 1);
    }

    #[test]
    fn groups_by_author() {
        let (batch, _) = build(&[
            ev("a", "X", REF - 10),
            ev("b", "X", REF - 20),
            ev("c", "X", REF - 30),
            ev("a", "Y", REF - 10),
            ev("b", "Y", REF - 10),
        ]);
        let sizes: BTreeMap<&str, usize> = batch
            .events
            .iter()
            .map(|(k, v)| (k.as_str(), v.len()))
            .collect();
        assert_eq!(sizes, BTreeMap::from([("X", 3), ("Y", 2)]));
    }

    #[test]
    fn malformed_and_rejected_lines_are_counted() {
        let (batch, report) = build(&[
            "garbage".to_string(),
            ev("a", "a", REF - 10),
            "actor=a\tauthor=b\tnetwork=tw\tcontent_type=message\taction=retweet\ttimestamp=abc"
                .into(),
            ev("a", "b", REF - 10),
        ]);
        assert_eq!(batch.event_count(), 1);
        assert_eq!(report.get("events.malformed"), 2);
        assert_eq!(report.get("events.rejected.self-reaction"), 1);
        assert!(report.summary_line().starts_with("report=load\t"));
        assert!(Record::parse(&report.summary_line()).is_ok());
    }

    #[test]
    fn latest_profile_not_after_reference_date_wins() {
        let reg = FeatureRegistry::default_config();
        let mut b = BatchBuilder::new(REF, &reg).unwrap(); // 2023-11-14
        for (date, n) in [
            ("2023-10-01", 1),
            ("2023-11-14", 2),
            ("2023-11-15", 3),
            ("2023-11-01", 4),
        ] {
            b.add_profile_line(&format!(
                "user=u\tnetwork=tw\tas_of={date}\tnum.followers={n}"
            ));
        }
        let (batch, report) = b.finish();
        assert_eq!(batch.profiles.len(), 1);
        let p = batch.profiles.values().next().unwrap();
        assert_eq!(p.numeric_attrs["followers"], 2.0);
        assert_eq!(report.get("profiles.future"), 1);
    }

    #[test]
    fn load_from_files_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let events = write(
            dir.path(),
            "e.log",
            &[
                ev("b", "x", REF - 5),
                ev("a", "x", REF - 9),
                "#comment".into(),
                String::new(),
            ],
        );
        let edges = write(
            dir.path(),
            "g.log",
            &[
                "from=a\tto=x\tnetwork=tw".into(),
                "from=a\tto=a\tnetwork=tw".into(),
            ],
        );
        let labels = write(
            dir.path(),
            "l.log",
            &["network=tw\tuser_a=a\tuser_b=x\tvotes_a=1\tvotes_b=4".into()],
        );
        let paths = InputPaths {
            events: vec![events],
            edges: vec![edges],
            labels: vec![labels],
            ..Default::default()
        };
        let reg = FeatureRegistry::default_config();
        let (b1, r1) = load_batch(&paths, REF, &reg).unwrap();
        let (b2, r2) = load_batch(&paths, REF, &reg).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(r1, r2);
        assert_eq!(b1.event_count(), 2);
        assert_eq!(b1.edges.len(), 1);
        assert_eq!(r1.get("edges.rejected.self-loop"), 1);
        assert_eq!(b1.labels.len(), 1);

        let missing = InputPaths {
            events: vec![dir.path().join("nope.log")],
            ..Default::default()
        };
        assert!(matches!(
            load_batch(&missing, REF, &reg),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn partition_is_author_disjoint_and_complete() {
        let (batch, _) = build(&[
            ev("x", "A", REF - 10),
            ev("y", "A", REF - 10),
            ev("x", "B", REF - 10),
            ev("x", "C", REF - 10),
        ]);
        let one = partition_by_author(&batch, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 3);

        let two = partition_by_author(&batch, 2).unwrap();
        let mut seen = BTreeSet::new();
        let mut total = 0;
        for shard in &two {
            for (author, events) in shard {
                assert!(seen.insert(*author));
                assert!(events.iter().all(|e| &e.author == *author));
                total += events.len();
            }
        }
        assert_eq!(total, batch.event_count());
        assert!(matches!(
            partition_by_author(&batch, 0),
            Err(IngestError::ZeroShards)
        ));
    }
}
