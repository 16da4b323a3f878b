//! Contests under audit and per-ballot interpretations of them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContestError {
    #[error("contest `{0}` has no candidates")]
    NoCandidates(String),
    #[error("contest `{contest}`: candidate `{candidate}` listed twice")]
    DuplicateCandidate { contest: String, candidate: String },
    #[error("contest `{contest}`: expected {k_seats} winners, got {winners}")]
    WinnerCount {
        contest: String,
        k_seats: usize,
        winners: usize,
    },
    #[error("contest `{contest}` needs at least one loser")]
    NoLosers { contest: String },
    #[error("contest `{contest}`: unknown candidate `{candidate}`")]
    UnknownCandidate { contest: String, candidate: String },
    #[error("contest `{contest}`: no reported tally for `{candidate}`")]
    MissingTally { contest: String, candidate: String },
    #[error("contest `{contest}`: winner `{winner}` ({winner_votes}) does not beat loser `{loser}` ({loser_votes})")]
    NotAWin {
        contest: String,
        winner: String,
        winner_votes: u64,
        loser: String,
        loser_votes: u64,
    },
    #[error("contest ids must be unique; `{0}` repeats")]
    DuplicateContest(String),
    #[error("unknown contest `{0}`")]
    UnknownContest(String),
}

/// A contest with its reported result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawContest", into = "RawContest")]
pub struct ContestSetup {
    contest_id: String,
    candidates: Vec<String>,
    winners: BTreeSet<String>,
    reported_tallies: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct RawContest {
    contest_id: String,
    candidates: Vec<String>,
    winners: Vec<String>,
    reported_tallies: BTreeMap<String, u64>,
    #[serde(default)]
    k_seats: Option<usize>,
}

impl TryFrom<RawContest> for ContestSetup {
    type Error = ContestError;
    fn try_from(raw: RawContest) -> Result<Self, Self::Error> {
        let k = raw.k_seats.unwrap_or(raw.winners.len());
        ContestSetup::new(raw.contest_id, raw.candidates, raw.winners, raw.reported_tallies, k)
    }
}

impl From<ContestSetup> for RawContest {
    fn from(c: ContestSetup) -> Self {
        let k_seats = Some(c.winners.len());
        RawContest {
            winners: c.candidates.iter().filter(|x| c.winners.contains(*x)).cloned().collect(),
            contest_id: c.contest_id,
            candidates: c.candidates,
            reported_tallies: c.reported_tallies,
            k_seats,
        }
    }
}

impl ContestSetup {
    pub fn new<S: Into<String>>(
        contest_id: impl Into<String>,
        candidates: impl IntoIterator<Item = S>,
        winners: impl IntoIterator<Item = S>,
        reported_tallies: BTreeMap<String, u64>,
        k_seats: usize,
    ) -> Result<Self, ContestError> {
        let contest_id = contest_id.into();
        let candidates: Vec<String> = candidates.into_iter().map(Into::into).collect();
        if candidates.is_empty() {
            return Err(ContestError::NoCandidates(contest_id));
        }
        let mut set = BTreeSet::new();
        for c in &candidates {
            if !set.insert(c.clone()) {
                return Err(ContestError::DuplicateCandidate {
                    contest: contest_id,
                    candidate: c.clone(),
                });
            }
        }
        let winner_list: Vec<String> = winners.into_iter().map(Into::into).collect();
        let mut winners = BTreeSet::new();
        for w in winner_list {
            if !set.contains(&w) {
                return Err(ContestError::UnknownCandidate {
                    contest: contest_id,
                    candidate: w,
                });
            }
            winners.insert(w);
        }
        if winners.len() != k_seats || k_seats == 0 {
            return Err(ContestError::WinnerCount {
                contest: contest_id,
                k_seats,
                winners: winners.len(),
            });
        }
        if winners.len() == candidates.len() {
            return Err(ContestError::NoLosers { contest: contest_id });
        }
        for name in reported_tallies.keys() {
            if !set.contains(name) {
                return Err(ContestError::UnknownCandidate {
                    contest: contest_id,
                    candidate: name.clone(),
                });
            }
        }
        for c in &candidates {
            if !reported_tallies.contains_key(c) {
                return Err(ContestError::MissingTally {
                    contest: contest_id,
                    candidate: c.clone(),
                });
            }
        }
        let setup = Self {
            contest_id,
            candidates,
            winners,
            reported_tallies,
        };
        for (w, l) in setup.pairs() {
            let (tw, tl) = (setup.tally(w), setup.tally(l));
            if tw <= tl {
                return Err(ContestError::NotAWin {
                    contest: setup.contest_id.clone(),
                    winner: w.into(),
                    winner_votes: tw,
                    loser: l.into(),
                    loser_votes: tl,
                });
            }
        }
        Ok(setup)
    }

    /// Single-winner contest from `(candidate, tally)` pairs; the top tally wins.
    pub fn plurality(
        contest_id: impl Into<String>,
        tallies: impl IntoIterator<Item = (&'static str, u64)>,
    ) -> Result<Self, ContestError> {
        let tallies: Vec<(String, u64)> = tallies.into_iter().map(|(c, n)| (c.into(), n)).collect();
        let winner = tallies
            .iter()
            .max_by_key(|(_, n)| *n)
            .map(|(c, _)| c.clone())
            .unwrap_or_default();
        let candidates: Vec<String> = tallies.iter().map(|(c, _)| c.clone()).collect();
        Self::new(contest_id, candidates, [winner], tallies.into_iter().collect(), 1)
    }

    pub fn contest_id(&self) -> &str {
        &self.contest_id
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn k_seats(&self) -> usize {
        self.winners.len()
    }

    pub fn is_winner(&self, candidate: &str) -> bool {
        self.winners.contains(candidate)
    }

    pub fn has_candidate(&self, candidate: &str) -> bool {
        self.candidates.iter().any(|c| c == candidate)
    }

    pub fn winners(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(String::as_str).filter(|c| self.is_winner(c))
    }

    pub fn losers(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(String::as_str).filter(|c| !self.is_winner(c))
    }

    pub fn tally(&self, candidate: &str) -> u64 {
        self.reported_tallies.get(candidate).copied().unwrap_or(0)
    }

    pub fn reported_tallies(&self) -> &BTreeMap<String, u64> {
        &self.reported_tallies
    }

    /// All (winner, loser) pairs in candidate order; there are k(n−k).
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.winners().flat_map(move |w| self.losers().map(move |l| (w, l)))
    }

    pub fn smallest_margin(&self) -> u64 {
        self.pairs()
            .map(|(w, l)| self.tally(w) - self.tally(l))
            .min()
            .unwrap_or(0)
    }

    pub(crate) fn check_candidate(&self, candidate: &str) -> Result<(), ContestError> {
        if self.has_candidate(candidate) {
            Ok(())
        } else {
            Err(ContestError::UnknownCandidate {
                contest: self.contest_id.clone(),
                candidate: candidate.into(),
            })
        }
    }
}

/// Smallest pairwise margin in votes across a set of contests.
pub fn smallest_margin(contests: &[ContestSetup]) -> u64 {
    contests.iter().map(ContestSetup::smallest_margin).min().unwrap_or(0)
}

pub fn check_unique_ids(contests: &[ContestSetup]) -> Result<(), ContestError> {
    let mut seen = BTreeSet::new();
    for c in contests {
        if !seen.insert(c.contest_id()) {
            return Err(ContestError::DuplicateContest(c.contest_id().into()));
        }
    }
    Ok(())
}

/// What one ballot shows in one contest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mark", content = "candidates", rename_all = "snake_case")]
pub enum ContestMark {
    Votes(BTreeSet<String>),
    Undervote,
    Overvote,
    Invalid,
}

impl ContestMark {
    pub fn vote_for<S: Into<String>>(candidates: impl IntoIterator<Item = S>) -> Self {
        ContestMark::Votes(candidates.into_iter().map(Into::into).collect())
    }

    /// The candidates this mark validly votes for; more than `k` selections
    /// count as an overvote and yield nothing.
    pub fn valid_votes(&self, k_seats: usize) -> Option<&BTreeSet<String>> {
        match self {
            ContestMark::Votes(v) if !v.is_empty() && v.len() <= k_seats => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Machine,
    #[default]
    Human,
    Zombie,
}

/// One reading of a ballot across contests. Contests absent from `marks`
/// read as undervotes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Interpretation {
    pub marks: BTreeMap<String, ContestMark>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Interpretation {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            marks: BTreeMap::new(),
            provenance,
        }
    }

    pub fn with(mut self, contest_id: impl Into<String>, mark: ContestMark) -> Self {
        self.marks.insert(contest_id.into(), mark);
        self
    }

    pub fn mark(&self, contest_id: &str) -> &ContestMark {
        self.marks.get(contest_id).unwrap_or(&ContestMark::Undervote)
    }

    /// Every candidate named in a vote must belong to its contest, and every
    /// contest must be one of `contests`.
    pub fn validate(&self, contests: &[ContestSetup]) -> Result<(), ContestError> {
        for (id, mark) in &self.marks {
            let contest = contests
                .iter()
                .find(|c| c.contest_id() == id)
                .ok_or_else(|| ContestError::UnknownContest(id.clone()))?;
            if let ContestMark::Votes(v) = mark {
                for c in v {
                    contest.check_candidate(c)?;
                }
            }
        }
        Ok(())
    }
}
