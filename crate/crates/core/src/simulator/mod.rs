//! Monte Carlo checks of the worst-case substitution: synthetic ballots,
//! deliberately wrong manifests, and complete audits run two ways (through
//! the true manifest, and through the wrong one with zombie substitution).

use alloc::string::String;

use thiserror::Error;

use crate::scenario::ScenarioDecision;

mod dominance;
mod population;
mod replicate;

pub use dominance::{dkw_epsilon, dominance_check, risk_estimate, DominanceReport, RiskEstimate};
pub use population::{
    even_groups, perturb_manifest, ManifestErrorModel, PopulationBuilder, PopulationSpec, CONTEST, LOSER, WINNER,
};
pub use replicate::{
    enumerate_fixed_n, replicate_seed, Arm, DrawSource, Experiment, FastPolling, FastPollingSetup, HashSampler,
    ReplicatePair, ReplicateRecord, Resolved, RunMode, Scripted, SimRng,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("infeasible manifest error model: {0}")]
    InfeasibleErrorModel(String),
    #[error("inconsistent population: {0}")]
    InconsistentPopulation(String),
    #[error("simulation setup: {0}")]
    Setup(String),
    #[error("audit may not start: {0:?}")]
    ScenarioHalt(ScenarioDecision),
    #[error("empty sample")]
    EmptySample,
    #[error("no replicates")]
    NoReplicates,
    #[error("the reported outcome is correct, so there is no risk to estimate")]
    OutcomeNotWrong,
}
