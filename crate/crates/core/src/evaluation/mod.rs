//! Validation instruments: nDCG against reference rankings, a synthetic
//! population with known latent influence, a campaign simulator and rank
//! correlation.

pub mod campaign;
pub mod ndcg;
pub mod planted;
pub mod population;
pub mod spearman;

use thiserror::Error;

pub use campaign::{
    run_campaign, write_campaign_report, BinStats, CampaignParams, CampaignResult, TargetOutcome,
};
pub use ndcg::{dcg, ndcg, RankedEntity, ReferenceRanking};
pub use planted::{planted_problem, PlantedParams, PlantedProblem};
pub use population::{
    generate_population, parse_population, write_population, GeneratedData, PopulationParams,
    SyntheticPopulation, SyntheticUser,
};
pub use spearman::{average_ranks, rank_correlation, spearman, MIN_USERS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("rank correlation needs at least {MIN_USERS} users, got {0}")]
    TooFewUsers(usize),
    #[error("entity {0:?} is not in the reference ranking")]
    UnknownEntity(String),
    #[error("invalid reference ranking: {0}")]
    BadRanking(String),
    #[error("list of length {len} is shorter than cutoff {p}")]
    ShortList { len: usize, p: usize },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("population line {line}: {msg}")]
    Population { line: usize, msg: String },
    #[error("no scored users fall in the targeted score range")]
    NoTargets,
}
