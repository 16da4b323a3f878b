use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::population::PopulationSpec;
use super::SimError;
use crate::comparison::{ComparisonParams, ComparisonState, Overstatement};
use crate::manifest::{BallotLocation, BallotManifest};
use crate::polling::{PairShare, PollingBallot, PollingSetup};
use crate::sampling::{self, AuditSeed};
use crate::scenario::{classify, BallotCounts};
use crate::session::AuditMethod;

/// Source of draws in `1..=n_upper`.
pub trait DrawSource {
    fn next_draw(&mut self, n_upper: u64) -> u64;
}

/// Fast simulation generator.
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(ChaCha8Rng::from_seed(seed))
    }
}

impl DrawSource for SimRng {
    fn next_draw(&mut self, n_upper: u64) -> u64 {
        self.0.random_range(1..=n_upper)
    }
}

/// The audit sampler itself, for cross-checks against live sessions.
pub struct HashSampler {
    seed: AuditSeed,
    counter: u64,
}

impl HashSampler {
    pub fn new(seed: AuditSeed) -> Self {
        Self { seed, counter: 0 }
    }
}

impl DrawSource for HashSampler {
    fn next_draw(&mut self, n_upper: u64) -> u64 {
        let d = sampling::draw_next(&self.seed, self.counter, n_upper).expect("n_upper >= 1");
        self.counter += 1;
        d
    }
}

/// A fixed list of draws, for exhaustive enumeration.
pub struct Scripted<'a> {
    draws: &'a [u64],
    at: usize,
}

impl<'a> Scripted<'a> {
    pub fn new(draws: &'a [u64]) -> Self {
        Self { draws, at: 0 }
    }
}

impl DrawSource for Scripted<'_> {
    fn next_draw(&mut self, _n_upper: u64) -> u64 {
        let d = self.draws[self.at];
        self.at += 1;
        d
    }
}

/// Seed for replicate `index`: SHA-256 of the master seed and the decimal
/// index, the same construction the audit sampler uses.
pub fn replicate_seed(master_seed: &[u8], index: u64) -> [u8; 32] {
    sampling::hash_counter(master_seed, index, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunMode {
    /// Report the P-value after exactly `draws` ballots.
    FixedN { draws: u64 },
    /// Stop at P ≤ alpha or escalate after `cap` draws.
    Sequential { alpha: f64, cap: u64 },
}

impl RunMode {
    fn max_draws(&self) -> u64 {
        match *self {
            RunMode::FixedN { draws } => draws,
            RunMode::Sequential { cap, .. } => cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub final_p: f64,
    pub stopped_without_full_count: bool,
    pub draws_used: u64,
    pub zombies: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicatePair {
    pub index: u64,
    pub truth: ReplicateRecord,
    pub zombie: ReplicateRecord,
}

/// What a draw turned out to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved {
    Ballot(usize),
    Phantom,
}

/// One way of sampling the population: a manifest to resolve draws through
/// and the bound draws are taken up to.
#[derive(Debug, Clone)]
pub struct Arm {
    manifest: BallotManifest,
    n_upper: u64,
    engine: EngineSetup,
}

#[derive(Debug, Clone)]
enum EngineSetup {
    Comparison(ComparisonParams),
    Polling(FastPollingSetup),
}

impl Arm {
    /// Sampling through the true manifest up to N_O.
    pub fn truth(pop: &PopulationSpec, method: AuditMethod, gamma: f64) -> Result<Self, SimError> {
        Self::build(pop, pop.true_manifest(), pop.n_true(), method, gamma)
    }

    /// Sampling through the reported manifest up to `n_upper`, with worst
    /// case substitution for anything that cannot be produced.
    pub fn zombie(pop: &PopulationSpec, n_upper: u64, method: AuditMethod, gamma: f64) -> Result<Self, SimError> {
        let counts = BallotCounts {
            n_manifest: pop.reported_manifest().total_listed(),
            n_oracle: None,
            n_upper: Some(n_upper),
        };
        let decision = classify(counts, pop.contest().smallest_margin());
        if !decision.is_proceed() {
            return Err(SimError::ScenarioHalt(decision));
        }
        Self::build(pop, pop.reported_manifest().clone(), n_upper, method, gamma)
    }

    fn build(
        pop: &PopulationSpec,
        manifest: BallotManifest,
        n_upper: u64,
        method: AuditMethod,
        gamma: f64,
    ) -> Result<Self, SimError> {
        let engine = match method {
            AuditMethod::Comparison => EngineSetup::Comparison(
                ComparisonParams::from_margin(pop.contest().smallest_margin(), n_upper, gamma)
                    .map_err(|e| SimError::Setup(alloc::format!("{e}")))?,
            ),
            AuditMethod::Polling => EngineSetup::Polling(FastPollingSetup::new(
                &PollingSetup::new(pop.contest().clone()).map_err(|e| SimError::Setup(alloc::format!("{e}")))?,
            )),
        };
        Ok(Self {
            manifest,
            n_upper,
            engine,
        })
    }

    pub fn n_upper(&self) -> u64 {
        self.n_upper
    }

    pub fn manifest(&self) -> &BallotManifest {
        &self.manifest
    }

    pub fn resolve(&self, pop: &PopulationSpec, draw: u64) -> Resolved {
        match self.manifest.locate(draw, self.n_upper) {
            Ok(BallotLocation::Listed {
                group_ordinal,
                index_within_group,
                ..
            }) => pop
                .physical_ballot(group_ordinal, index_within_group)
                .map_or(Resolved::Phantom, Resolved::Ballot),
            _ => Resolved::Phantom,
        }
    }

    /// Run one audit, calling `observe(draw, p_value)` after every ballot.
    pub fn run_traced(
        &self,
        pop: &PopulationSpec,
        source: &mut dyn DrawSource,
        mode: RunMode,
        mut observe: impl FnMut(u64, f64),
    ) -> ReplicateRecord {
        let mut stat = Statistic::new(&self.engine);
        let mut zombies = 0;
        let mut draws_used = 0;
        let mut p = 1.0;
        let mut stopped = false;
        while draws_used < mode.max_draws() {
            let draw = source.next_draw(self.n_upper);
            draws_used += 1;
            match self.resolve(pop, draw) {
                Resolved::Ballot(b) => stat.apply_ballot(pop, b, &self.engine),
                Resolved::Phantom => {
                    zombies += 1;
                    stat.apply_zombie(&self.engine);
                }
            }
            p = stat.p_value(&self.engine);
            observe(draw, p);
            if let RunMode::Sequential { alpha, .. } = mode {
                if p <= alpha {
                    stopped = true;
                    break;
                }
            }
        }
        ReplicateRecord {
            final_p: p,
            stopped_without_full_count: stopped,
            draws_used,
            zombies,
        }
    }

    pub fn run(&self, pop: &PopulationSpec, source: &mut dyn DrawSource, mode: RunMode) -> ReplicateRecord {
        self.run_traced(pop, source, mode, |_, _| {})
    }
}

enum Statistic {
    Comparison(ComparisonState),
    Polling(FastPolling),
}

impl Statistic {
    fn new(engine: &EngineSetup) -> Self {
        match engine {
            EngineSetup::Comparison(_) => Statistic::Comparison(ComparisonState::new()),
            EngineSetup::Polling(s) => Statistic::Polling(FastPolling::new(s)),
        }
    }

    fn apply_ballot(&mut self, pop: &PopulationSpec, ballot: usize, engine: &EngineSetup) {
        match (self, engine) {
            (Statistic::Comparison(st), EngineSetup::Comparison(params)) => {
                *st = st.km_update(pop.overstatement(ballot), params)
            }
            (Statistic::Polling(st), EngineSetup::Polling(setup)) => st.update(pop.polling_vote(ballot), setup),
            _ => unreachable!("statistic built from this engine"),
        }
    }

    fn apply_zombie(&mut self, engine: &EngineSetup) {
        match (self, engine) {
            (Statistic::Comparison(st), EngineSetup::Comparison(params)) => {
                *st = st.km_update(Overstatement::ZOMBIE, params)
            }
            (Statistic::Polling(st), EngineSetup::Polling(setup)) => st.update(&PollingBallot::ZombieAllLosers, setup),
            _ => unreachable!("statistic built from this engine"),
        }
    }

    fn p_value(&self, engine: &EngineSetup) -> f64 {
        match (self, engine) {
            (Statistic::Comparison(st), _) => st.p_value(),
            (Statistic::Polling(st), EngineSetup::Polling(setup)) => st.p_value(setup),
            _ => unreachable!("statistic built from this engine"),
        }
    }
}

/// Candidate-indexed copy of a polling setup for the simulation hot loop.
#[derive(Debug, Clone)]
pub struct FastPollingSetup {
    candidates: Vec<alloc::string::String>,
    // (winner index, loser index, pair)
    pairs: Vec<(usize, usize, PairShare)>,
}

impl FastPollingSetup {
    pub fn new(setup: &PollingSetup) -> Self {
        let candidates: Vec<_> = setup.contest().candidates().to_vec();
        let index = |c: &str| candidates.iter().position(|x| x == c).expect("pair member is a candidate");
        let pairs = setup
            .pairs()
            .iter()
            .map(|p| (index(&p.winner), index(&p.loser), p.clone()))
            .collect();
        Self { candidates, pairs }
    }

    fn index(&self, c: &str) -> Option<usize> {
        self.candidates.iter().position(|x| x == c)
    }
}

/// Same arithmetic as [`crate::polling::PollingState`]: ln T per pair is
/// `wins · ln 2s + (losses + zombies) · ln 2(1 − s)` via [`PairShare::log_t`].
#[derive(Debug, Clone)]
pub struct FastPolling {
    seen: Vec<u64>,
    zombies: u64,
}

impl FastPolling {
    pub fn new(setup: &FastPollingSetup) -> Self {
        Self {
            seen: alloc::vec![0; setup.candidates.len()],
            zombies: 0,
        }
    }

    pub fn update(&mut self, ballot: &PollingBallot, setup: &FastPollingSetup) {
        match ballot {
            PollingBallot::VoteFor(c) => {
                if let Some(i) = setup.index(c) {
                    self.seen[i] += 1;
                }
            }
            PollingBallot::VotesFor(cs) => {
                for c in cs {
                    if let Some(i) = setup.index(c) {
                        self.seen[i] += 1;
                    }
                }
            }
            PollingBallot::NoValidVote => {}
            PollingBallot::ZombieAllLosers => self.zombies += 1,
        }
    }

    pub fn log_t(&self, setup: &FastPollingSetup) -> Vec<f64> {
        setup
            .pairs
            .iter()
            .map(|(w, l, pair)| pair.log_t(self.seen[*w], self.seen[*l] + self.zombies))
            .collect()
    }

    pub fn p_value(&self, setup: &FastPollingSetup) -> f64 {
        setup
            .pairs
            .iter()
            .map(|(w, l, pair)| libm::exp(-pair.log_t(self.seen[*w], self.seen[*l] + self.zombies)).min(1.0))
            .fold(0.0, f64::max)
    }
}

/// Both arms of one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub truth: Arm,
    pub zombie: Arm,
    pub mode: RunMode,
}

impl Experiment {
    pub fn new(
        pop: &PopulationSpec,
        method: AuditMethod,
        gamma: f64,
        n_upper: u64,
        mode: RunMode,
    ) -> Result<Self, SimError> {
        if let RunMode::Sequential { alpha, cap } = mode {
            if !(alpha > 0.0 && alpha < 1.0) || cap == 0 {
                return Err(SimError::Setup(alloc::format!("bad sequential mode alpha={alpha} cap={cap}")));
            }
        }
        Ok(Self {
            truth: Arm::truth(pop, method, gamma)?,
            zombie: Arm::zombie(pop, n_upper, method, gamma)?,
            mode,
        })
    }

    /// Replicate `index`; both arms share the replicate's seed.
    pub fn run_replicate(&self, pop: &PopulationSpec, master_seed: &[u8], index: u64) -> ReplicatePair {
        let seed = replicate_seed(master_seed, index);
        let truth = self.truth.run(pop, &mut SimRng::from_seed(seed), self.mode);
        let zombie = self.zombie.run(pop, &mut SimRng::from_seed(seed), self.mode);
        ReplicatePair { index, truth, zombie }
    }

    pub fn run_replicates(&self, pop: &PopulationSpec, master_seed: &[u8], replicates: u64) -> Vec<ReplicatePair> {
        (0..replicates).map(|i| self.run_replicate(pop, master_seed, i)).collect()
    }
}

/// Every draw sequence of length `n` over `1..=arm.n_upper()` with its
/// P-value after `n` ballots. Each sequence has probability `n_upper^-n`.
pub fn enumerate_fixed_n(arm: &Arm, pop: &PopulationSpec, n: u32) -> Vec<(Vec<u64>, f64)> {
    let n_upper = arm.n_upper();
    let total = n_upper.pow(n);
    let mut out = Vec::with_capacity(total as usize);
    let mut seq = alloc::vec![1u64; n as usize];
    for _ in 0..total {
        let rec = arm.run(pop, &mut Scripted::new(&seq), RunMode::FixedN { draws: n as u64 });
        out.push((seq.clone(), rec.final_p));
        // odometer increment, last position fastest
        for slot in seq.iter_mut().rev() {
            if *slot < n_upper {
                *slot += 1;
                break;
            }
            *slot = 1;
        }
    }
    out
}
