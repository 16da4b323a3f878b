//! Ballot-level comparison audits.
//!
//! Each audited ballot contributes its maximum pairwise overstatement `o`
//! (in votes, across every contest and every winner/loser pair). The P-value
//! after `n` ballots is the Kaplan–Markov simplification
//!
//! ```text
//! P = Π (1 − 1/U) / (1 − o_i / (2γ)),   U = 2γ / μ
//! ```
//!
//! where μ is the diluted margin (smallest pairwise margin over the size of
//! the sampled universe, phantoms included) and γ ≥ 1 is the error
//! inflation constant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contest::{ContestError, ContestSetup, Interpretation};
use crate::wide::{weighted_sum, Wide};

pub const DEFAULT_GAMMA: f64 = 1.03905;
pub const GAMMA_RANGE: (f64, f64) = (1.01, 2.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComparisonError {
    #[error("infeasible audit parameters: U = 2γ/μ = {u} must exceed 1")]
    InfeasibleParams { u: f64 },
    #[error("diluted margin {0} is outside (0, 1]")]
    InvalidMargin(f64),
    #[error("gamma {0} is outside [1.01, 2]")]
    InvalidGamma(f64),
    #[error("risk limit {0} is outside (0, 1)")]
    InvalidRiskLimit(f64),
    #[error("overstatement {0} is outside -2..=2")]
    InvalidOverstatement(i64),
    #[error(transparent)]
    Contest(#[from] ContestError),
}

/// Maximum pairwise margin overstatement of one ballot, in votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Overstatement(i8);

impl Overstatement {
    pub const ALL: [Overstatement; 5] = [
        Overstatement(-2),
        Overstatement(-1),
        Overstatement(0),
        Overstatement(1),
        Overstatement(2),
    ];
    pub const ZOMBIE: Overstatement = Overstatement(2);

    pub fn new(value: i64) -> Result<Self, ComparisonError> {
        if (-2..=2).contains(&value) {
            Ok(Self(value as i8))
        } else {
            Err(ComparisonError::InvalidOverstatement(value))
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }

    fn slot(self) -> usize {
        (self.0 + 2) as usize
    }
}

impl TryFrom<i64> for Overstatement {
    type Error = ComparisonError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Overstatement> for i64 {
    fn from(o: Overstatement) -> i64 {
        o.0 as i64
    }
}

/// The interpretation substituted for a ballot that cannot be produced.
pub fn zombie_interpretation_comparison() -> Overstatement {
    Overstatement::ZOMBIE
}

/// +1 if the mark is a valid vote for `w` and not `l`, −1 for the reverse.
fn pair_score(interp: &Interpretation, contest: &ContestSetup, w: &str, l: &str) -> i8 {
    match interp.mark(contest.contest_id()).valid_votes(contest.k_seats()) {
        Some(v) => v.contains(w) as i8 - v.contains(l) as i8,
        None => 0,
    }
}

fn check_marks(interp: &Interpretation, contest: &ContestSetup) -> Result<(), ContestError> {
    if let crate::contest::ContestMark::Votes(v) = interp.mark(contest.contest_id()) {
        for c in v {
            contest.check_candidate(c)?;
        }
    }
    Ok(())
}

/// How much the machine reading overstated the (w, l) margin on this ballot.
pub fn pair_overstatement(
    machine: &Interpretation,
    human: &Interpretation,
    contest: &ContestSetup,
    w: &str,
    l: &str,
) -> Result<Overstatement, ComparisonError> {
    let unknown = |c: &str| ContestError::UnknownCandidate {
        contest: contest.contest_id().into(),
        candidate: c.into(),
    };
    if !contest.has_candidate(w) || !contest.is_winner(w) {
        return Err(unknown(w).into());
    }
    if !contest.has_candidate(l) || contest.is_winner(l) {
        return Err(unknown(l).into());
    }
    check_marks(machine, contest)?;
    check_marks(human, contest)?;
    let o = pair_score(machine, contest, w, l) - pair_score(human, contest, w, l);
    Ok(Overstatement(o))
}

/// Maximum overstatement across all contests and all winner/loser pairs.
///
/// Contests the interpretations mention but that are not under audit are
/// ignored.
pub fn max_overstatement(
    machine: &Interpretation,
    human: &Interpretation,
    contests: &[ContestSetup],
) -> Result<Overstatement, ComparisonError> {
    let mut worst: Option<Overstatement> = None;
    for contest in contests {
        for (w, l) in contest.pairs() {
            let o = pair_overstatement(machine, human, contest, w, l)?;
            worst = Some(worst.map_or(o, |m| m.max(o)));
        }
    }
    Ok(worst.unwrap_or(Overstatement(0)))
}

/// μ, γ and the derived U, plus the per-ballot log factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ComparisonParams {
    diluted_margin: f64,
    gamma: f64,
    u_factor: f64,
    // ln(1 − 1/U)
    ln_step: Wide,
    // ln(1 − o/(2γ)) indexed by o + 2
    ln_denominator: [Wide; 5],
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    diluted_margin: f64,
    gamma: f64,
}

impl TryFrom<RawParams> for ComparisonParams {
    type Error = ComparisonError;
    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        ComparisonParams::new(r.diluted_margin, r.gamma)
    }
}

impl From<ComparisonParams> for RawParams {
    fn from(p: ComparisonParams) -> Self {
        RawParams {
            diluted_margin: p.diluted_margin,
            gamma: p.gamma,
        }
    }
}

impl ComparisonParams {
    pub fn new(diluted_margin: f64, gamma: f64) -> Result<Self, ComparisonError> {
        if !(diluted_margin > 0.0 && diluted_margin <= 1.0) {
            return Err(ComparisonError::InvalidMargin(diluted_margin));
        }
        if !(GAMMA_RANGE.0..=GAMMA_RANGE.1).contains(&gamma) {
            return Err(ComparisonError::InvalidGamma(gamma));
        }
        let u = 2.0 * gamma / diluted_margin;
        if u <= 1.0 {
            return Err(ComparisonError::InfeasibleParams { u });
        }
        let one = Wide::from_f64(1.0);
        let mut ln_denominator = [Wide::ZERO; 5];
        for o in Overstatement::ALL {
            ln_denominator[o.slot()] = one.sub(Wide::ratio(o.0 as f64, 2.0 * gamma)).ln();
        }
        Ok(Self {
            diluted_margin,
            gamma,
            u_factor: u,
            ln_step: one.sub(Wide::ratio(diluted_margin, 2.0 * gamma)).ln(),
            ln_denominator,
        })
    }

    /// μ = smallest margin in votes / size of the sampled universe.
    pub fn from_margin(
        smallest_margin_votes: u64,
        sampling_upper_bound: u64,
        gamma: f64,
    ) -> Result<Self, ComparisonError> {
        if sampling_upper_bound == 0 {
            return Err(ComparisonError::InvalidMargin(f64::INFINITY));
        }
        Self::new(smallest_margin_votes as f64 / sampling_upper_bound as f64, gamma)
    }

    pub fn diluted_margin(&self) -> f64 {
        self.diluted_margin
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn u_factor(&self) -> f64 {
        self.u_factor
    }

    /// Natural log of the per-ballot multiplier for overstatement `o`.
    pub fn ln_factor(&self, o: Overstatement) -> f64 {
        self.ln_step.sub(self.ln_denominator[o.slot()]).to_f64()
    }

    pub fn factor(&self, o: Overstatement) -> f64 {
        libm::exp(self.ln_factor(o))
    }
}

/// Sequential test state. `log_p` is not capped; the cap applies on read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonState {
    pub n_sampled: u64,
    /// Counts of overstatements −2, −1, 0, 1, 2 in that order.
    pub counts: [u64; 5],
    pub log_p: f64,
}

impl Default for ComparisonState {
    fn default() -> Self {
        Self::new()
    }
}

impl ComparisonState {
    pub fn new() -> Self {
        Self {
            n_sampled: 0,
            counts: [0; 5],
            log_p: 0.0,
        }
    }

    pub fn count(&self, o: Overstatement) -> u64 {
        self.counts[o.slot()]
    }

    /// Add one audited ballot.
    ///
    /// `log_p` is re-derived from the overstatement counts on every update,
    /// so the result depends only on the multiset of overstatements.
    pub fn km_update(&self, o: Overstatement, params: &ComparisonParams) -> Self {
        let mut next = *self;
        next.n_sampled += 1;
        next.counts[o.slot()] += 1;
        let steps = core::iter::once((next.n_sampled, params.ln_step));
        let denominators = next.counts.iter().zip(&params.ln_denominator).map(|(&c, d)| (c, d.neg()));
        next.log_p = weighted_sum(steps.chain(denominators));
        next
    }

    pub fn p_value(&self) -> f64 {
        libm::exp(self.log_p).min(1.0)
    }
}

/// Error-free sample size: smallest n with (1 − 1/U)^n ≤ α.
pub fn initial_sample_size(params: &ComparisonParams, alpha: f64) -> Result<u64, ComparisonError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ComparisonError::InvalidRiskLimit(alpha));
    }
    let ln_f = libm::log(1.0 - 1.0 / params.u_factor);
    let ln_a = libm::log(alpha);
    let mut n = libm::ceil(ln_a / ln_f).max(1.0) as u64;
    while n > 1 && (n - 1) as f64 * ln_f <= ln_a {
        n -= 1;
    }
    while n as f64 * ln_f > ln_a {
        n += 1;
    }
    Ok(n)
}
