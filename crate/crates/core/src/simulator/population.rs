use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::comparison::{max_overstatement, Overstatement};
use crate::contest::{ContestMark, ContestSetup, Interpretation, Provenance};
use crate::manifest::{BallotManifest, ManifestGroup};
use crate::polling::PollingBallot;

/// Synthetic ground truth: what every physical ballot says, what the voting
/// system recorded for it, how the ballots are actually stored, and the
/// manifest as (mis)reported.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    contest: ContestSetup,
    true_ballots: Vec<Interpretation>,
    machine_cvr: Vec<Interpretation>,
    true_group_counts: Vec<ManifestGroup>,
    reported_manifest: BallotManifest,
    // derived per physical ballot
    overstatements: Vec<Overstatement>,
    polling_votes: Vec<PollingBallot>,
    group_offsets: Vec<u64>,
}

impl PopulationSpec {
    pub fn new(
        contest: ContestSetup,
        true_ballots: Vec<Interpretation>,
        machine_cvr: Vec<Interpretation>,
        true_group_counts: Vec<ManifestGroup>,
        reported_manifest: BallotManifest,
    ) -> Result<Self, SimError> {
        let n_true: u64 = true_group_counts.iter().map(|g| g.claimed_count).sum();
        if n_true != true_ballots.len() as u64 || machine_cvr.len() != true_ballots.len() {
            return Err(SimError::InconsistentPopulation(format!(
                "group counts sum to {n_true}, {} true ballots, {} machine records",
                true_ballots.len(),
                machine_cvr.len()
            )));
        }
        if reported_manifest.groups().len() != true_group_counts.len()
            || reported_manifest
                .groups()
                .iter()
                .zip(&true_group_counts)
                .any(|(a, b)| a.group_id != b.group_id)
        {
            return Err(SimError::InconsistentPopulation(
                "reported manifest must list the same groups in the same order".into(),
            ));
        }
        let contests = core::slice::from_ref(&contest);
        let overstatements = machine_cvr
            .iter()
            .zip(&true_ballots)
            .map(|(m, h)| max_overstatement(m, h, contests))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::InconsistentPopulation(format!("{e}")))?;
        let polling_votes = true_ballots
            .iter()
            .map(|b| PollingBallot::from_mark(b.mark(contest.contest_id()), contest.k_seats()))
            .collect();
        let mut group_offsets = Vec::with_capacity(true_group_counts.len());
        let mut acc = 0;
        for g in &true_group_counts {
            group_offsets.push(acc);
            acc += g.claimed_count;
        }
        Ok(Self {
            contest,
            true_ballots,
            machine_cvr,
            true_group_counts,
            reported_manifest,
            overstatements,
            polling_votes,
            group_offsets,
        })
    }

    pub fn contest(&self) -> &ContestSetup {
        &self.contest
    }

    pub fn true_ballots(&self) -> &[Interpretation] {
        &self.true_ballots
    }

    pub fn machine_cvr(&self) -> &[Interpretation] {
        &self.machine_cvr
    }

    pub fn true_group_counts(&self) -> &[ManifestGroup] {
        &self.true_group_counts
    }

    pub fn reported_manifest(&self) -> &BallotManifest {
        &self.reported_manifest
    }

    /// N_O.
    pub fn n_true(&self) -> u64 {
        self.true_ballots.len() as u64
    }

    /// The manifest that matches how ballots are really stored.
    pub fn true_manifest(&self) -> BallotManifest {
        BallotManifest::new(self.true_group_counts.clone()).expect("validated at construction")
    }

    /// Same population with a different reported manifest.
    pub fn with_manifest(&self, reported_manifest: BallotManifest) -> Result<Self, SimError> {
        Self::new(
            self.contest.clone(),
            self.true_ballots.clone(),
            self.machine_cvr.clone(),
            self.true_group_counts.clone(),
            reported_manifest,
        )
    }

    pub fn overstatement(&self, ballot: usize) -> Overstatement {
        self.overstatements[ballot]
    }

    pub fn polling_vote(&self, ballot: usize) -> &PollingBallot {
        &self.polling_votes[ballot]
    }

    /// Physical ballot at (group, 1-based index), or `None` when the group
    /// holds fewer ballots than that.
    pub fn physical_ballot(&self, group_ordinal: usize, index_within_group: u64) -> Option<usize> {
        let g = group_ordinal.checked_sub(1)?;
        let actual = self.true_group_counts.get(g)?.claimed_count;
        (index_within_group >= 1 && index_within_group <= actual)
            .then(|| (self.group_offsets[g] + index_within_group - 1) as usize)
    }

    /// Groups holding more ballots than the manifest claims.
    pub fn graves(&self) -> Vec<&str> {
        self.compare_groups(|actual, claimed| actual > claimed)
    }

    /// Groups holding fewer ballots than the manifest claims.
    pub fn hellmouths(&self) -> Vec<&str> {
        self.compare_groups(|actual, claimed| actual < claimed)
    }

    fn compare_groups(&self, pick: impl Fn(u64, u64) -> bool) -> Vec<&str> {
        self.true_group_counts
            .iter()
            .zip(self.reported_manifest.groups())
            .filter(|(t, r)| pick(t.claimed_count, r.claimed_count))
            .map(|(t, _)| t.group_id.as_str())
            .collect()
    }

    /// True tally per candidate, from the physical ballots.
    pub fn true_tally(&self, candidate: &str) -> u64 {
        self.polling_votes
            .iter()
            .filter(|v| match v {
                PollingBallot::VoteFor(c) => c == candidate,
                PollingBallot::VotesFor(cs) => cs.contains(candidate),
                _ => false,
            })
            .count() as u64
    }

    /// Whether some reported winner fails to strictly beat some reported
    /// loser on the physical ballots.
    pub fn reported_outcome_wrong(&self) -> bool {
        self.contest
            .pairs()
            .any(|(w, l)| self.true_tally(w) <= self.true_tally(l))
    }
}

/// Two-candidate population: reported winner `A`, loser `B`, the rest
/// undervotes, split into equal-sized groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationBuilder {
    pub n_ballots: u64,
    pub n_groups: u64,
    /// Reported votes for the winner and the loser.
    pub reported_winner: u64,
    pub reported_loser: u64,
    /// Machine A, truth B.
    pub two_vote_overstatements: u64,
    /// Machine A, truth undervote.
    pub one_vote_overstatements: u64,
    /// Machine undervote, truth A.
    pub one_vote_understatements: u64,
    /// Machine B, truth A.
    pub two_vote_understatements: u64,
    pub seed: u64,
}

pub const WINNER: &str = "A";
pub const LOSER: &str = "B";
pub const CONTEST: &str = "contest";

impl PopulationBuilder {
    /// `n_ballots` split evenly between the two candidates around a diluted
    /// margin of `margin` (fraction of all ballots), no errors.
    pub fn with_margin(n_ballots: u64, n_groups: u64, margin: f64, seed: u64) -> Self {
        let margin_votes = libm::round(margin * n_ballots as f64) as u64;
        let loser = (n_ballots - margin_votes) / 2;
        Self {
            n_ballots,
            n_groups,
            reported_winner: loser + margin_votes,
            reported_loser: loser,
            two_vote_overstatements: 0,
            one_vote_overstatements: 0,
            one_vote_understatements: 0,
            two_vote_understatements: 0,
            seed,
        }
    }

    /// Flip just enough machine-`A` ballots to true `B` votes that `B`
    /// really wins, leaving the reported tallies unchanged.
    pub fn reversed_outcome(mut self) -> Self {
        let margin = self.reported_winner - self.reported_loser;
        self.two_vote_overstatements = margin / 2 + 1;
        self
    }

    pub fn build(&self) -> Result<PopulationSpec, SimError> {
        let n = self.n_ballots;
        let undervotes = n
            .checked_sub(self.reported_winner + self.reported_loser)
            .ok_or_else(|| SimError::InconsistentPopulation("reported votes exceed ballots".into()))?;
        if self.n_groups == 0 || self.n_groups > n {
            return Err(SimError::InconsistentPopulation("bad group count".into()));
        }
        let machine_a_changed = self.two_vote_overstatements + self.one_vote_overstatements;
        if machine_a_changed > self.reported_winner
            || self.two_vote_understatements > self.reported_loser
            || self.one_vote_understatements > undervotes
        {
            return Err(SimError::InconsistentPopulation("more errors than ballots of that kind".into()));
        }
        let contest = ContestSetup::plurality(CONTEST, [(WINNER, self.reported_winner), (LOSER, self.reported_loser)])
            .map_err(|e| SimError::InconsistentPopulation(format!("{e}")))?;
        let vote = |c: &str, p: Provenance| Interpretation::new(p).with(CONTEST, ContestMark::vote_for([c]));
        let under = |p: Provenance| Interpretation::new(p).with(CONTEST, ContestMark::Undervote);

        let mut pairs: Vec<(Interpretation, Interpretation)> = Vec::with_capacity(n as usize);
        for i in 0..self.reported_winner {
            let m = vote(WINNER, Provenance::Machine);
            let t = if i < self.two_vote_overstatements {
                vote(LOSER, Provenance::Human)
            } else if i < machine_a_changed {
                under(Provenance::Human)
            } else {
                vote(WINNER, Provenance::Human)
            };
            pairs.push((m, t));
        }
        for i in 0..self.reported_loser {
            let t = if i < self.two_vote_understatements {
                vote(WINNER, Provenance::Human)
            } else {
                vote(LOSER, Provenance::Human)
            };
            pairs.push((vote(LOSER, Provenance::Machine), t));
        }
        for i in 0..undervotes {
            let t = if i < self.one_vote_understatements {
                vote(WINNER, Provenance::Human)
            } else {
                under(Provenance::Human)
            };
            pairs.push((under(Provenance::Machine), t));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        pairs.shuffle(&mut rng);
        let (machine, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

        let groups = even_groups(n, self.n_groups);
        let manifest = BallotManifest::new(groups.clone()).map_err(|e| SimError::InconsistentPopulation(format!("{e}")))?;
        PopulationSpec::new(contest, truth, machine, groups, manifest)
    }
}

pub fn even_groups(n: u64, n_groups: u64) -> Vec<ManifestGroup> {
    let base = n / n_groups;
    let extra = n % n_groups;
    (0..n_groups)
        .map(|g| ManifestGroup::new(format!("batch-{:04}", g + 1), base + u64::from(g < extra)))
        .collect()
}

/// How to corrupt a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManifestErrorModel {
    /// Groups whose claimed count is `magnitude` lower than reality.
    pub n_graves: usize,
    /// Groups whose claimed count is `magnitude` higher than reality.
    pub n_hellmouths: usize,
    /// Ballots left off the listing altogether, removed one at a time from
    /// uniformly chosen listed ballots.
    pub n_omitted: u64,
    pub magnitude: u64,
}

impl ManifestErrorModel {
    /// Move `magnitude` ballots' worth of count between `pairs` pairs of groups.
    pub fn misfiled(pairs: usize, magnitude: u64) -> Self {
        Self {
            n_graves: pairs,
            n_hellmouths: pairs,
            n_omitted: 0,
            magnitude,
        }
    }

    pub fn omitted(n_omitted: u64) -> Self {
        Self {
            n_omitted,
            ..Self::default()
        }
    }
}

/// Claimed counts that differ from `true_counts` according to `model`.
pub fn perturb_manifest(
    true_counts: &[ManifestGroup],
    model: &ManifestErrorModel,
    rng_seed: u64,
) -> Result<BallotManifest, SimError> {
    if model.n_graves + model.n_hellmouths > true_counts.len() {
        return Err(SimError::InfeasibleErrorModel(format!(
            "{} graves and {} hellmouths need that many distinct groups; only {} exist",
            model.n_graves,
            model.n_hellmouths,
            true_counts.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut order: Vec<usize> = (0..true_counts.len()).collect();
    order.shuffle(&mut rng);
    let mut claimed: Vec<u64> = true_counts.iter().map(|g| g.claimed_count).collect();
    for &g in &order[..model.n_graves] {
        claimed[g] = claimed[g].checked_sub(model.magnitude).ok_or_else(|| {
            SimError::InfeasibleErrorModel(format!(
                "group `{}` holds {} ballots, cannot under-report by {}",
                true_counts[g].group_id, claimed[g], model.magnitude
            ))
        })?;
    }
    for &g in &order[model.n_graves..model.n_graves + model.n_hellmouths] {
        claimed[g] += model.magnitude;
    }
    let listed: u64 = claimed.iter().sum();
    if model.n_omitted > listed {
        return Err(SimError::InfeasibleErrorModel(format!(
            "cannot omit {} of {listed} listed ballots",
            model.n_omitted
        )));
    }
    let mut remaining = listed;
    for _ in 0..model.n_omitted {
        let mut pick = rng.random_range(0..remaining);
        for c in claimed.iter_mut() {
            if pick < *c {
                *c -= 1;
                break;
            }
            pick -= *c;
        }
        remaining -= 1;
    }
    BallotManifest::new(
        true_counts
            .iter()
            .zip(claimed)
            .map(|(g, c)| ManifestGroup::new(g.group_id.clone(), c))
            .collect(),
    )
    .map_err(|e| SimError::InfeasibleErrorModel(format!("{e}")))
}
