//! Batch orchestration: simulate, ingest, features, train, score, evaluate.
//!
//! Each stage writes plain-text files under `<output_dir>/<stage>/` and
//! reads only files, so any stage can be re-run on its own once its
//! predecessors' outputs exist.

pub mod cohort;
pub mod config;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::DateTime;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{is_skippable, Record};
use crate::evaluation::{
    generate_population, ndcg, parse_population, rank_correlation, run_campaign,
    write_campaign_report, EvalError, ReferenceRanking,
};
use crate::event::{NetworkName, PairwiseLabel, RecordError};
use crate::features::dump::{
    parse_feature_store, write_feature_store, write_maxima, write_raw_table,
};
use crate::features::{
    aggregate_dynamic, aggregate_longlasting, build_feature_store, compute_global_maxima,
    CohortContext, FeatureError,
};
use crate::hierarchy::{
    network_stats, parse_snapshot, write_snapshot, HierarchyError, NetworkStats, ScoringTree,
};
use crate::ingest::{BatchBuilder, IngestBatch, IngestError, InputPaths};
use crate::registry::RegistryError;
use crate::training::{
    evaluate_model, parse_model, preprocess_labels, split_pairs, train_network, write_model,
    CleanPair, TrainingError,
};

pub use cohort::{parse_user_list, rank_cohort, write_cohort, CohortEntry};
pub use config::{
    parse_reference_time, FeatureSettings, NamedFile, Overrides, RunConfig, TrainingSettings,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Tree(#[from] HierarchyError),
    #[error("config is missing {0}")]
    Missing(&'static str),
    #[error("invalid reference time {0:?}")]
    BadReferenceTime(String),
    #[error("{what} file {path} does not exist")]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: RecordError,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Simulate,
    Ingest,
    Features,
    Train,
    Score,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::Ingest,
        Stage::Features,
        Stage::Train,
        Stage::Score,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Process exit code when this stage fails. Config errors use 2.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Ingest => 3,
            Stage::Features => 4,
            Stage::Train => 5,
            Stage::Score => 6,
            Stage::Evaluate => 7,
            Stage::Simulate => 8,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const CONFIG_EXIT_CODE: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => CONFIG_EXIT_CODE,
            RunError::Stage { stage, .. } => stage.exit_code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Only(Stage),
    /// Every stage in order; `simulate` only when the config asks for it.
    All,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Only(s) => s.name(),
            Mode::All => "all",
        }
    }

    pub fn stages(self, config: &RunConfig) -> Vec<Stage> {
        match self {
            Mode::Only(s) => vec![s],
            Mode::All => Stage::ALL
                .into_iter()
                .filter(|&s| s != Stage::Simulate || config.simulate.is_some())
                .collect(),
        }
    }
}

/// Deterministic record of one run. Wall-clock timings live in
/// `timings.txt`, not here, so that identical runs produce identical
/// manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub mode: String,
    pub config_hash: String,
    pub registry_hash: String,
    pub tree_hash: String,
    pub seed: Option<u64>,
    pub reference_time: i64,
    pub stages: Vec<Stage>,
    /// Display path and SHA-256 of every file read that this run did not write.
    pub inputs: BTreeMap<String, String>,
    /// `(stage, key)` to count.
    pub counts: BTreeMap<(Stage, String), u64>,
    /// Path relative to the output directory and SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let stages: Vec<&str> = self.stages.iter().map(|s| s.name()).collect();
        let header = Record::new()
            .with("manifest", "run")
            .with("mode", &self.mode)
            .with("stages", stages.join(","))
            .with("config_sha256", &self.config_hash)
            .with("registry_sha256", &self.registry_hash)
            .with("tree_sha256", &self.tree_hash)
            .with(
                "seed",
                self.seed.map_or_else(|| "none".into(), |s| s.to_string()),
            )
            .with("reference_time", self.reference_time);
        let mut out = format!("{header}\n");
        for (p, h) in &self.inputs {
            writeln!(out, "{}", Record::new().with("input", p).with("sha256", h)).unwrap();
        }
        for ((stage, key), v) in &self.counts {
            let r = Record::new()
                .with("count", key)
                .with("stage", stage)
                .with("value", v);
            writeln!(out, "{r}").unwrap();
        }
        for (p, h) in &self.outputs {
            writeln!(out, "{}", Record::new().with("output", p).with("sha256", h)).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub timings: Vec<(Stage, Duration)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Named sub-seed, so that stages draw independent streams from one seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

const INPUT_KINDS: [&str; 5] = ["events", "profiles", "edges", "labels", "identities"];

fn stage_inputs(dir: &Path) -> InputPaths {
    let f = |k: &str| vec![dir.join(format!("{k}.txt"))];
    InputPaths {
        events: f("events"),
        profiles: f("profiles"),
        edges: f("edges"),
        labels: f("labels"),
        identities: f("identities"),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    out: &'a Path,
    manifest: RunManifest,
}

impl Ctx<'_> {
    fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    fn display(&self, path: &Path) -> String {
        match path.strip_prefix(self.out) {
            Ok(rel) => format!("<out>/{}", rel.to_string_lossy()),
            Err(_) => self.config.display_path(path),
        }
    }

    fn read(&mut self, path: &Path) -> Result<String, StageError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let rel = path
            .strip_prefix(self.out)
            .ok()
            .map(|r| r.to_string_lossy().into_owned());
        if rel.is_none_or(|r| !self.manifest.outputs.contains_key(&r)) {
            self.manifest
                .inputs
                .insert(self.display(path), sha256_hex(text.as_bytes()));
        }
        Ok(text)
    }

    fn write(&mut self, stage: Stage, name: &str, text: &str) -> Result<(), StageError> {
        let path = self.dir(stage).join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        self.manifest.outputs.insert(
            format!("{}/{name}", stage.name()),
            sha256_hex(text.as_bytes()),
        );
        Ok(())
    }

    fn count(&mut self, stage: Stage, key: impl Into<String>, v: u64) {
        self.manifest.counts.insert((stage, key.into()), v);
    }

    /// Empties the stage directory so stale files from earlier runs cannot
    /// leak into this one.
    fn reset(&self, stage: Stage) -> Result<(), StageError> {
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))
    }

    fn load_batch(
        &mut self,
        paths: &InputPaths,
    ) -> Result<(IngestBatch, crate::ingest::LoadReport), StageError> {
        let mut b = BatchBuilder::new(self.config.reference_time, &self.config.registry)?;
        let groups = [
            &paths.events,
            &paths.profiles,
            &paths.edges,
            &paths.labels,
            &paths.identities,
        ];
        for (kind, files) in groups.into_iter().enumerate() {
            for p in files {
                let text = self.read(p)?;
                for line in text.lines() {
                    match kind {
                        0 => b.add_event_line(line),
                        1 => b.add_profile_line(line),
                        2 => b.add_edge_line(line),
                        3 => b.add_label_line(line),
                        _ => b.add_identity_line(line),
                    }
                }
            }
        }
        Ok(b.finish())
    }
}

/// Checks that `mode` can run under `config` before anything is written.
pub fn validate(config: &RunConfig, mode: Mode) -> Result<(), ConfigError> {
    let stages = mode.stages(config);
    if stages.contains(&Stage::Simulate) {
        if config.simulate.is_none() {
            return Err(ConfigError::Missing("a [simulate] section"));
        }
        if config.seed.is_none() {
            return Err(ConfigError::Missing("seed (required to simulate)"));
        }
    }
    if stages.contains(&Stage::Ingest)
        && config.simulate.is_none()
        && config.inputs.all().next().is_none()
    {
        return Err(ConfigError::Missing("input files"));
    }
    config.check_files()
}

/// Runs the stages of `mode`. On failure the failing stage directory and
/// the output root get an `INCOMPLETE` marker naming the cause, and no
/// manifest is written.
pub fn run_pipeline(config: &RunConfig, mode: Mode) -> Result<RunOutcome, RunError> {
    validate(config, mode)?;
    let out = config.output_dir.as_path();
    let stage_err = |stage: Stage| move |source: StageError| RunError::Stage { stage, source };
    fs::create_dir_all(out)
        .map_err(io_err(out))
        .map_err(stage_err(mode.stages(config)[0]))?;
    for name in ["INCOMPLETE", "manifest.txt", "timings.txt"] {
        let _ = fs::remove_file(out.join(name));
    }

    let stages = mode.stages(config);
    let mut ctx = Ctx {
        config,
        out,
        manifest: RunManifest {
            mode: mode.name().to_string(),
            config_hash: config.config_hash.clone(),
            registry_hash: config.registry_hash.clone(),
            tree_hash: config.tree_hash.clone(),
            seed: config.seed,
            reference_time: config.reference_time,
            stages: stages.clone(),
            inputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            outputs: BTreeMap::new(),
        },
    };
    let mut timings = Vec::new();
    for &stage in &stages {
        let start = Instant::now();
        let result = ctx.reset(stage).and_then(|()| match stage {
            Stage::Simulate => simulate(&mut ctx),
            Stage::Ingest => ingest(&mut ctx),
            Stage::Features => features(&mut ctx),
            Stage::Train => train(&mut ctx),
            Stage::Score => score(&mut ctx),
            Stage::Evaluate => evaluate(&mut ctx),
        });
        if let Err(source) = result {
            let marker = Record::new()
                .with("stage", stage)
                .with("error", source.to_string())
                .to_string();
            let _ = fs::create_dir_all(ctx.dir(stage));
            let _ = fs::write(ctx.dir(stage).join("INCOMPLETE"), format!("{marker}\n"));
            let _ = fs::write(out.join("INCOMPLETE"), format!("{marker}\n"));
            return Err(RunError::Stage { stage, source });
        }
        timings.push((stage, start.elapsed()));
    }

    let manifest_text = ctx.manifest.to_text();
    let mut timing_text = String::new();
    for (s, d) in &timings {
        let r = Record::new()
            .with("stage", s)
            .with("seconds", format!("{:.3}", d.as_secs_f64()));
        writeln!(timing_text, "{r}").unwrap();
    }
    let write = |name: &str, text: &str| {
        let p = out.join(name);
        fs::write(&p, text).map_err(io_err(&p))
    };
    let last = *stages.last().unwrap();
    write("manifest.txt", &manifest_text).map_err(stage_err(last))?;
    write("timings.txt", &timing_text).map_err(stage_err(last))?;
    Ok(RunOutcome {
        manifest: ctx.manifest,
        timings,
    })
}

fn simulate(ctx: &mut Ctx) -> Result<(), StageError> {
    let c = ctx.config;
    let params = c.simulate.as_ref().expect("validated");
    let seed = derive_seed(c.seed.expect("validated"), "simulate");
    let data = generate_population(params, &c.registry, c.reference_time, seed)?;
    for (name, text) in data.render() {
        ctx.write(Stage::Simulate, name, &text)?;
    }
    ctx.count(Stage::Simulate, "users", data.population.users.len() as u64);
    ctx.count(Stage::Simulate, "events", data.events.len() as u64);
    ctx.count(Stage::Simulate, "labels", data.labels.len() as u64);
    Ok(())
}

fn ingest(ctx: &mut Ctx) -> Result<(), StageError> {
    let paths = if ctx.config.simulate.is_some() {
        stage_inputs(&ctx.dir(Stage::Simulate))
    } else {
        ctx.config.inputs.clone()
    };
    let (batch, report) = ctx.load_batch(&paths)?;
    let mut texts: BTreeMap<&str, String> =
        INPUT_KINDS.iter().map(|&k| (k, String::new())).collect();
    let mut push = |kind: &str, r: Record| writeln!(texts.get_mut(kind).unwrap(), "{r}").unwrap();
    for e in batch.all_events() {
        push("events", e.to_record());
    }
    for p in batch.profiles.values() {
        push("profiles", p.to_record());
    }
    for e in &batch.edges {
        push("edges", e.to_record());
    }
    for l in &batch.labels {
        push("labels", l.to_record());
    }
    for i in batch.identities.values() {
        push("identities", i.to_record());
    }
    for (kind, text) in &texts {
        ctx.write(Stage::Ingest, &format!("{kind}.txt"), text)?;
    }
    ctx.write(
        Stage::Ingest,
        "report.txt",
        &format!("{}\n", report.summary_line()),
    )?;
    for (k, v) in report.counts() {
        ctx.count(Stage::Ingest, k.clone(), *v);
    }
    Ok(())
}

fn features(ctx: &mut Ctx) -> Result<(), StageError> {
    let c = ctx.config;
    let (batch, _) = ctx.load_batch(&stage_inputs(&ctx.dir(Stage::Ingest)))?;
    let cohorts = match &c.prior_snapshot {
        Some(p) => {
            let text = ctx.read(p)?;
            let snap = parse_snapshot(&text)?;
            CohortContext::new(snap.prior_scores(), c.features.peer_band)
                .expect("validated peer band")
        }
        None => CohortContext::bootstrap(),
    };
    let mut raw = aggregate_dynamic(&batch, &cohorts, &c.registry, c.features.shards)?;
    let (longlasting, ll_report) = aggregate_longlasting(
        batch.profiles.values(),
        &batch.edges,
        &c.registry,
        &c.features.pagerank(),
    )?;
    raw.merge(longlasting);
    let maxima = compute_global_maxima(&raw, &c.registry);
    let store = build_feature_store(&raw, &maxima, &c.registry, &batch.memberships())?;
    let stats = network_stats(&batch);

    ctx.write(Stage::Features, "raw.txt", &write_raw_table(&raw))?;
    ctx.write(Stage::Features, "maxima.txt", &write_maxima(&maxima))?;
    ctx.write(Stage::Features, "vectors.txt", &write_feature_store(&store))?;
    ctx.write(Stage::Features, "stats.txt", &write_stats(&stats))?;
    let unconverged: Vec<&str> = ll_report
        .unconverged_pagerank
        .iter()
        .map(NetworkName::as_str)
        .collect();
    let report = Record::new()
        .with("report", "features")
        .with("users", raw.users().count())
        .with("raw_entries", raw.entry_count())
        .with("vectors", store.vector_count())
        .with("skipped_attrs", ll_report.skipped_attrs)
        .with("unconverged_pagerank", unconverged.join(","));
    ctx.write(Stage::Features, "report.txt", &format!("{report}\n"))?;
    ctx.count(Stage::Features, "raw_entries", raw.entry_count() as u64);
    ctx.count(Stage::Features, "vectors", store.vector_count() as u64);
    Ok(())
}

/// `network=<name>\tnodes=<n>\tedges=<m>` per network.
pub fn write_stats(stats: &BTreeMap<NetworkName, NetworkStats>) -> String {
    let mut out = String::new();
    for (n, s) in stats {
        let r = Record::new()
            .with("network", n)
            .with("nodes", s.nodes)
            .with("edges", s.edges);
        writeln!(out, "{r}").unwrap();
    }
    out
}

pub fn parse_stats(text: &str) -> Result<BTreeMap<NetworkName, NetworkStats>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !is_skippable(l)) {
        let err = |e: &dyn fmt::Display| format!("line {}: {e}", i + 1);
        let r = Record::parse(line).map_err(|e| err(&e))?;
        r.expect_only(&["network", "nodes", "edges"], &[])
            .map_err(|e| err(&e))?;
        let net =
            NetworkName::new(r.require("network").map_err(|e| err(&e))?).map_err(|e| err(&e))?;
        let nodes: f64 = r.parse_field("nodes").map_err(|e| err(&e))?;
        let edges: f64 = r.parse_field("edges").map_err(|e| err(&e))?;
        if !(nodes.is_finite() && nodes >= 0.0 && edges.is_finite() && edges >= 0.0) {
            return Err(err(&"counts must be finite and non-negative"));
        }
        if out.insert(net, NetworkStats { nodes, edges }).is_some() {
            return Err(err(&"duplicate network"));
        }
    }
    Ok(out)
}

fn model_file(net: &NetworkName) -> String {
    format!("{net}.model")
}

fn train(ctx: &mut Ctx) -> Result<(), StageError> {
    let c = ctx.config;
    let labels_path = ctx.dir(Stage::Ingest).join("labels.txt");
    let labels_text = ctx.read(&labels_path)?;
    let mut labels = Vec::new();
    for (i, line) in labels_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !is_skippable(l))
    {
        labels.push(
            PairwiseLabel::parse_line(line).map_err(|source| StageError::Record {
                path: labels_path.clone(),
                line: i + 1,
                source,
            })?,
        );
    }
    let store = parse_feature_store(
        &ctx.read(&ctx.dir(Stage::Features).join("vectors.txt"))?,
        &c.registry,
    )?;
    let mut by_network: BTreeMap<NetworkName, Vec<CleanPair>> = BTreeMap::new();
    for p in preprocess_labels(&labels) {
        by_network.entry(p.network.clone()).or_default().push(p);
    }

    let mut report = String::new();
    let mut trained = 0;
    for spec in c.registry.networks() {
        let status = |s: &str| {
            Record::new()
                .with("report", "model")
                .with("network", &spec.name)
                .with("status", s)
        };
        let pairs = by_network.get(&spec.name).map_or(&[][..], Vec::as_slice);
        let Some(features) = store.network(&spec.name) else {
            writeln!(report, "{}", status("no_features")).unwrap();
            continue;
        };
        if pairs.is_empty() {
            writeln!(report, "{}", status("no_labels")).unwrap();
            continue;
        }
        let seed = derive_seed(c.seed_or_default(), &format!("split.{}", spec.name));
        let (train_pairs, eval_pairs) = split_pairs(pairs, c.training.train_fraction, seed);
        let (model, _) = match train_network(&train_pairs, features, &c.training.nnls()) {
            Ok(m) => m,
            Err(TrainingError::NoPairs(_)) => {
                writeln!(report, "{}", status("no_usable_pairs")).unwrap();
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let m = evaluate_model(&model, train_pairs.len(), &eval_pairs, features);
        let mut r = m.to_record();
        r.push("status", "trained");
        writeln!(report, "{r}").unwrap();
        ctx.write(Stage::Train, &model_file(&spec.name), &write_model(&model))?;
        ctx.count(
            Stage::Train,
            format!("pairs.{}", spec.name),
            pairs.len() as u64,
        );
        trained += 1;
    }
    ctx.write(Stage::Train, "report.txt", &report)?;
    ctx.count(Stage::Train, "models", trained);
    Ok(())
}

fn score(ctx: &mut Ctx) -> Result<(), StageError> {
    let c = ctx.config;
    let fdir = ctx.dir(Stage::Features);
    let store = parse_feature_store(&ctx.read(&fdir.join("vectors.txt"))?, &c.registry)?;
    let stats_path = fdir.join("stats.txt");
    let stats = parse_stats(&ctx.read(&stats_path)?).map_err(|msg| StageError::Format {
        path: stats_path.clone(),
        msg,
    })?;
    let mut models = BTreeMap::new();
    for spec in c.registry.networks() {
        let path = ctx.dir(Stage::Train).join(model_file(&spec.name));
        if path.is_file() {
            let model = parse_model(&ctx.read(&path)?, &c.registry)?;
            models.insert(spec.name.clone(), model.weights);
        }
    }
    let tree = ScoringTree::compile(&c.tree, &models, &stats, &c.registry)?;
    let as_of = DateTime::from_timestamp(c.reference_time, 0)
        .expect("validated reference time")
        .date_naive();
    let snapshot = tree.score_all(&store, as_of);
    ctx.write(Stage::Score, "snapshot.txt", &write_snapshot(&snapshot))?;

    let mut text = String::new();
    for id in tree.node_ids() {
        let kind = if tree.leaf_network(id).is_some() {
            "leaf"
        } else {
            "internal"
        };
        let w = tree.weights_of(id).unwrap_or(&[]);
        let weights: Vec<String> = w.iter().map(f64::to_string).collect();
        let r = Record::new()
            .with("node", id)
            .with("kind", kind)
            .with("weights", weights.join(","));
        writeln!(text, "{r}").unwrap();
    }
    for id in tree.pruned() {
        writeln!(text, "{}", Record::new().with("pruned", id)).unwrap();
    }
    ctx.write(Stage::Score, "tree.txt", &text)?;
    ctx.count(Stage::Score, "users", snapshot.entries.len() as u64);
    Ok(())
}

fn evaluate(ctx: &mut Ctx) -> Result<(), StageError> {
    let c = ctx.config;
    let snapshot = parse_snapshot(&ctx.read(&ctx.dir(Stage::Score).join("snapshot.txt"))?)?;
    let mut report = String::new();
    let overall: Vec<f64> = snapshot.entries.values().map(|e| e.overall).collect();
    let mean = if overall.is_empty() {
        0.0
    } else {
        overall.iter().sum::<f64>() / overall.len() as f64
    };
    let r = Record::new()
        .with("report", "snapshot")
        .with("users", overall.len())
        .with("mean_score", format!("{mean:.6}"))
        .with(
            "min_score",
            format!(
                "{:.6}",
                overall.iter().copied().fold(f64::INFINITY, f64::min)
            ),
        )
        .with(
            "max_score",
            format!(
                "{:.6}",
                overall.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            ),
        );
    writeln!(report, "{r}").unwrap();

    let population_path = c.evaluation.population.clone().or_else(|| {
        c.simulate
            .as_ref()
            .map(|_| ctx.dir(Stage::Simulate).join("population.txt"))
    });
    if let Some(path) = population_path {
        let population = parse_population(&ctx.read(&path)?)?;
        let scores: BTreeMap<_, _> = snapshot
            .entries
            .iter()
            .map(|(u, e)| (u.clone(), e.overall))
            .collect();
        let rho = rank_correlation(&scores, &population.latent())?;
        let r = Record::new()
            .with("report", "latent")
            .with(
                "users",
                scores
                    .keys()
                    .filter(|u| population.get(u).is_some())
                    .count(),
            )
            .with("spearman", format!("{rho:.6}"));
        writeln!(report, "{r}").unwrap();
        let seed = derive_seed(c.seed_or_default(), "campaign");
        let campaign = run_campaign(&population, &snapshot, &c.evaluation.campaign, seed)?;
        let text = write_campaign_report(&campaign);
        report.push_str(text.lines().last().unwrap_or_default());
        report.push('\n');
        ctx.write(Stage::Evaluate, "campaign.txt", &text)?;
    }

    for reference in &c.evaluation.references {
        let ranking = ReferenceRanking::parse(&reference.name, &ctx.read(&reference.path)?)?;
        let entities: Vec<String> = ranking.entries.iter().map(|e| e.entity.clone()).collect();
        let ranked = rank_cohort(&snapshot, &entities);
        let order: Vec<&str> = ranked.iter().map(|e| e.user.as_str()).collect();
        let p = reference.p.unwrap_or(entities.len());
        let value = ndcg(&ranking, &order, p)?;
        let r = Record::new()
            .with("report", "ndcg")
            .with("name", &reference.name)
            .with("p", p)
            .with("entities", entities.len())
            .with(
                "scored",
                ranked.iter().filter(|e| e.score.is_some()).count(),
            )
            .with("ndcg", format!("{value:.12}"));
        writeln!(report, "{r}").unwrap();
    }

    for cohort in &c.evaluation.cohorts {
        let users = parse_user_list(&ctx.read(&cohort.path)?);
        let ranked = rank_cohort(&snapshot, &users);
        ctx.write(
            Stage::Evaluate,
            &format!("cohort.{}.txt", cohort.name),
            &write_cohort(&ranked),
        )?;
    }
    ctx.write(Stage::Evaluate, "report.txt", &report)?;
    Ok(())
}
