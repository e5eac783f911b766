//! Influence scoring over multi-network interaction logs.
//!
//! The crate turns raw interaction events, profile snapshots and graph edges
//! into per-network feature vectors, learns non-negative feature weights from
//! pairwise human judgements, and combines per-network scores through a
//! weighted tree into a single 0-100 score per user.

pub mod codec;
pub mod evaluation;
pub mod event;
pub mod features;
pub mod hierarchy;
pub mod ingest;
pub mod pipeline;
pub mod registry;
pub mod training;
