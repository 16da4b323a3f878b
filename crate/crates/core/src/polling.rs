//! Ballot-polling audits: one sequential likelihood-ratio statistic per
//! (winner, loser) pair.
//!
//! With reported share `s = t_w / (t_w + t_l)`, a sampled vote for `w`
//! multiplies `T_wl` by `2s`, a vote for `l` multiplies it by `2(1 − s)`,
//! anything else leaves it alone. The pair's P-value is `min(1, 1/T_wl)` and
//! the audit's P-value is the largest over pairs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contest::{ContestMark, ContestSetup};
use crate::wide::{weighted_sum, Wide};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PollingError {
    #[error("contest `{contest}`: unknown candidate `{candidate}`")]
    UnknownCandidate { contest: String, candidate: String },
    #[error("contest `{contest}`: share {share} of `{winner}` over `{loser}` is not in (1/2, 1)")]
    DegenerateShare {
        contest: String,
        winner: String,
        loser: String,
        share: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairShare {
    pub winner: String,
    pub loser: String,
    pub share: f64,
    #[serde(skip)]
    ln_win: Wide,
    #[serde(skip)]
    ln_lose: Wide,
}

impl PairShare {
    /// ln(2s), the log multiplier for a vote for the winner.
    pub fn ln_win(&self) -> f64 {
        self.ln_win.to_f64()
    }

    /// ln(2(1 − s)), the log multiplier for a vote for the loser.
    pub fn ln_lose(&self) -> f64 {
        self.ln_lose.to_f64()
    }

    /// ln T for `wins` votes for the winner and `losses` against.
    pub fn log_t(&self, wins: u64, losses: u64) -> f64 {
        weighted_sum([(wins, self.ln_win), (losses, self.ln_lose)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollingSetup {
    contest: ContestSetup,
    pairs: Vec<PairShare>,
}

impl<'de> Deserialize<'de> for PollingSetup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            contest: ContestSetup,
        }
        let raw = Raw::deserialize(d)?;
        PollingSetup::new(raw.contest).map_err(serde::de::Error::custom)
    }
}

impl PollingSetup {
    pub fn new(contest: ContestSetup) -> Result<Self, PollingError> {
        let mut pairs = Vec::new();
        for (w, l) in contest.pairs() {
            let (tw, tl) = (contest.tally(w) as f64, contest.tally(l) as f64);
            let share = tw / (tw + tl);
            // 2t/(t_w + t_l) straight from the tallies; 1 − s would lose digits near s = 1
            let ln_of = |t: f64| Wide::ratio(2.0 * t, tw + tl).ln();
            if !(share > 0.5 && share < 1.0) {
                return Err(PollingError::DegenerateShare {
                    contest: contest.contest_id().into(),
                    winner: w.into(),
                    loser: l.into(),
                    share,
                });
            }
            pairs.push(PairShare {
                winner: w.into(),
                loser: l.into(),
                share,
                ln_win: ln_of(tw),
                ln_lose: ln_of(tl),
            });
        }
        Ok(Self { contest, pairs })
    }

    pub fn contest(&self) -> &ContestSetup {
        &self.contest
    }

    pub fn pairs(&self) -> &[PairShare] {
        &self.pairs
    }
}

/// One sampled ballot as the polling audit sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ballot", content = "candidates", rename_all = "snake_case")]
pub enum PollingBallot {
    VoteFor(String),
    /// Several valid votes in a vote-for-k contest; each counts on its own.
    VotesFor(BTreeSet<String>),
    NoValidVote,
    ZombieAllLosers,
}

impl PollingBallot {
    /// Reading of a contest mark; overvotes, undervotes and invalid marks
    /// carry no valid vote.
    pub fn from_mark(mark: &ContestMark, k_seats: usize) -> Self {
        match mark.valid_votes(k_seats) {
            Some(v) if v.len() == 1 => PollingBallot::VoteFor(v.iter().next().cloned().unwrap_or_default()),
            Some(v) => PollingBallot::VotesFor(v.clone()),
            None => PollingBallot::NoValidVote,
        }
    }
}

pub fn zombie_interpretation_polling() -> PollingBallot {
    PollingBallot::ZombieAllLosers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollingState {
    /// ln T per pair, aligned with [`PollingSetup::pairs`].
    pub log_t: Vec<f64>,
    pub n_sampled: u64,
    pub tallies_seen: BTreeMap<String, u64>,
    pub zombies_seen: u64,
    pub no_valid_vote: u64,
    /// Sampled ballots with at least one valid vote.
    pub voting_ballots: u64,
}

impl PollingState {
    pub fn new(setup: &PollingSetup) -> Self {
        Self {
            log_t: alloc::vec![0.0; setup.pairs.len()],
            n_sampled: 0,
            tallies_seen: BTreeMap::new(),
            zombies_seen: 0,
            no_valid_vote: 0,
            voting_ballots: 0,
        }
    }

    pub fn polling_update(&self, ballot: &PollingBallot, setup: &PollingSetup) -> Result<Self, PollingError> {
        let mut next = self.clone();
        next.n_sampled += 1;
        let voted: Vec<&String> = match ballot {
            PollingBallot::VoteFor(c) => alloc::vec![c],
            PollingBallot::VotesFor(cs) if cs.is_empty() => Vec::new(),
            PollingBallot::VotesFor(cs) => cs.iter().collect(),
            PollingBallot::NoValidVote => Vec::new(),
            PollingBallot::ZombieAllLosers => {
                next.zombies_seen += 1;
                next.recompute(setup);
                return Ok(next);
            }
        };
        for c in &voted {
            if !setup.contest.has_candidate(c) {
                return Err(PollingError::UnknownCandidate {
                    contest: setup.contest.contest_id().into(),
                    candidate: (*c).clone(),
                });
            }
        }
        if voted.is_empty() {
            next.no_valid_vote += 1;
        } else {
            next.voting_ballots += 1;
            for c in voted {
                *next.tallies_seen.entry(c.clone()).or_insert(0) += 1;
            }
        }
        next.recompute(setup);
        Ok(next)
    }

    // ln T is a function of the counts alone, so order of arrival is irrelevant
    fn recompute(&mut self, setup: &PollingSetup) {
        for (slot, pair) in self.log_t.iter_mut().zip(&setup.pairs) {
            let wins = self.tallies_seen.get(&pair.winner).copied().unwrap_or(0);
            let losses = self.tallies_seen.get(&pair.loser).copied().unwrap_or(0) + self.zombies_seen;
            *slot = pair.log_t(wins, losses);
        }
    }

    /// min(1, 1/T) for each pair.
    pub fn pair_p_values(&self) -> Vec<f64> {
        self.log_t.iter().map(|&l| libm::exp(-l).min(1.0)).collect()
    }

    /// The audit P-value: the worst pair.
    pub fn polling_p_value(&self) -> f64 {
        self.pair_p_values().into_iter().fold(0.0, f64::max)
    }

    pub fn seen_for(&self, candidate: &str) -> u64 {
        self.tallies_seen.get(candidate).copied().unwrap_or(0)
    }
}
