//! Decide whether an audit may proceed given the manifest total, the true
//! ballot count when known, and an upper bound on it.

use alloc::string::String;

use serde::{Deserialize, Serialize};

/// Ballot totals: N_M from the manifest, N_O when an oracle (ballot
/// accounting) supplies it, N_U as an upper bound on N_O.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotCounts {
    pub n_manifest: u64,
    #[serde(default)]
    pub n_oracle: Option<u64>,
    #[serde(default)]
    pub n_upper: Option<u64>,
}

impl BallotCounts {
    pub fn with_oracle(n_manifest: u64, n_oracle: u64) -> Self {
        Self {
            n_manifest,
            n_oracle: Some(n_oracle),
            n_upper: None,
        }
    }

    pub fn with_upper(n_manifest: u64, n_upper: u64) -> Self {
        Self {
            n_manifest,
            n_oracle: None,
            n_upper: Some(n_upper),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginErasureWarning {
    pub missing_ballots: u64,
    pub smallest_pairwise_margin_votes: u64,
    pub outcome_at_risk: bool,
}

pub const STUFFING_ACTIONS: &str = "count the ballot groups again, examine the ballots for evidence of \
fraud, and consider a forensic investigation and a full manual check of the manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ScenarioDecision {
    Proceed {
        sampling_upper_bound: u64,
        phantom_count: u64,
        margin_warning: Option<MarginErasureWarning>,
    },
    /// More ballots listed than were cast (or than the bound allows). No
    /// statistical adjustment is offered for this case.
    HaltStuffingEvidence { excess: u64, reason: String },
    HaltInconsistentBounds { reason: String },
}

impl ScenarioDecision {
    pub fn is_proceed(&self) -> bool {
        matches!(self, ScenarioDecision::Proceed { .. })
    }

    pub fn sampling_upper_bound(&self) -> Option<u64> {
        match self {
            ScenarioDecision::Proceed {
                sampling_upper_bound,
                ..
            } => Some(*sampling_upper_bound),
            _ => None,
        }
    }

    pub fn phantom_count(&self) -> Option<u64> {
        match self {
            ScenarioDecision::Proceed { phantom_count, .. } => Some(*phantom_count),
            _ => None,
        }
    }

    pub fn outcome_at_risk(&self) -> bool {
        matches!(
            self,
            ScenarioDecision::Proceed {
                margin_warning: Some(MarginErasureWarning {
                    outcome_at_risk: true,
                    ..
                }),
                ..
            }
        )
    }
}

fn stuffing(n_manifest: u64, bound: u64, what: &str) -> ScenarioDecision {
    ScenarioDecision::HaltStuffingEvidence {
        excess: n_manifest - bound,
        reason: alloc::format!(
            "manifest lists {n_manifest} ballots but {what} is {bound}; this is prima facie \
             evidence of ballot-box stuffing or another serious problem: {STUFFING_ACTIONS}"
        ),
    }
}

pub fn classify(counts: BallotCounts, smallest_margin_votes: u64) -> ScenarioDecision {
    let n_m = counts.n_manifest;
    let bound = match (counts.n_oracle, counts.n_upper) {
        (Some(o), Some(u)) if u < o => {
            return ScenarioDecision::HaltInconsistentBounds {
                reason: alloc::format!("upper bound {u} is below the known ballot count {o}"),
            }
        }
        (Some(o), _) if n_m > o => return stuffing(n_m, o, "the known number of ballots cast"),
        (Some(o), _) => o,
        (None, Some(u)) if n_m > u => return stuffing(n_m, u, "the upper bound on ballots cast"),
        (None, Some(u)) => u,
        (None, None) => {
            return ScenarioDecision::HaltInconsistentBounds {
                reason: "neither the ballot count nor an upper bound on it was supplied".into(),
            }
        }
    };
    let phantom_count = bound - n_m;
    ScenarioDecision::Proceed {
        sampling_upper_bound: bound,
        phantom_count,
        margin_warning: Some(MarginErasureWarning {
            missing_ballots: phantom_count,
            smallest_pairwise_margin_votes: smallest_margin_votes,
            outcome_at_risk: phantom_count >= smallest_margin_votes,
        }),
    }
}
