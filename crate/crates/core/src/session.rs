//! The live audit: draw, direct the auditor to a ballot, take the reading or
//! a not-found report, substitute the worst case where needed, decide.
//!
//! The session is strictly sequential. At most one listed draw waits for a
//! reading at any time; draws past the end of the manifest are resolved on
//! the spot because there is nothing to retrieve.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{
    self, max_overstatement, ComparisonError, ComparisonParams, ComparisonState,
};
use crate::contest::{self, ContestError, ContestSetup, Interpretation, Provenance};
use crate::manifest::{BallotLocation, BallotManifest, ManifestError};
use crate::polling::{PollingBallot, PollingError, PollingSetup, PollingState};
use crate::sampling::{draw_next, AuditSeed, SamplingError};
use crate::scenario::{classify, BallotCounts, ScenarioDecision};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("audit may not start: {0:?}")]
    ScenarioHalt(ScenarioDecision),
    #[error("phantom ballots could erase the smallest margin; acknowledge the risk to proceed")]
    MarginRiskUnacknowledged,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("session is not active")]
    SessionNotActive,
    #[error("a draw is waiting for its interpretation")]
    PendingInterpretation,
    #[error("no draw is waiting for an interpretation")]
    NoPendingDraw,
    #[error("interpretation does not fit this audit: {0}")]
    InterpretationSchemaMismatch(String),
    #[error("no cast vote record for ballot {index} of group `{group_id}`")]
    MissingCvr { group_id: String, index: u64 },
    #[error(transparent)]
    Contest(#[from] ContestError),
    #[error(transparent)]
    Comparison(#[from] ComparisonError),
    #[error(transparent)]
    Polling(#[from] PollingError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMethod {
    Comparison,
    Polling,
}

/// What to do with a listed ballot that has no cast vote record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingCvrPolicy {
    /// Score the machine reading as an undervote in every contest.
    #[default]
    Undervote,
    Error,
}

/// Machine interpretations keyed by (group id, 1-based index within group).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<CvrEntry>", into = "Vec<CvrEntry>")]
pub struct CastVoteRecords {
    records: BTreeMap<(String, u64), Interpretation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvrEntry {
    pub group_id: String,
    pub index_within_group: u64,
    pub interpretation: Interpretation,
}

impl From<Vec<CvrEntry>> for CastVoteRecords {
    fn from(v: Vec<CvrEntry>) -> Self {
        v.into_iter().collect()
    }
}

impl From<CastVoteRecords> for Vec<CvrEntry> {
    fn from(c: CastVoteRecords) -> Self {
        c.records
            .into_iter()
            .map(|((group_id, index_within_group), interpretation)| CvrEntry {
                group_id,
                index_within_group,
                interpretation,
            })
            .collect()
    }
}

impl FromIterator<CvrEntry> for CastVoteRecords {
    fn from_iter<I: IntoIterator<Item = CvrEntry>>(iter: I) -> Self {
        Self {
            records: iter
                .into_iter()
                .map(|e| ((e.group_id, e.index_within_group), e.interpretation))
                .collect(),
        }
    }
}

impl CastVoteRecords {
    pub fn insert(&mut self, group_id: impl Into<String>, index: u64, interpretation: Interpretation) -> Option<Interpretation> {
        self.records.insert((group_id.into(), index), interpretation)
    }

    pub fn get(&self, group_id: &str, index: u64) -> Option<&Interpretation> {
        // BTreeMap<(String, u64), _> cannot be queried with (&str, u64)
        self.records
            .range((String::from(group_id), index)..=(String::from(group_id), index))
            .next()
            .map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64, &Interpretation)> {
        self.records.iter().map(|((g, i), v)| (g.as_str(), *i, v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub method: AuditMethod,
    pub manifest: BallotManifest,
    pub contests: Vec<ContestSetup>,
    pub counts: BallotCounts,
    pub risk_limit: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub seed: AuditSeed,
    #[serde(default)]
    pub escalation_cap: Option<u64>,
    #[serde(default)]
    pub acknowledge_margin_risk: bool,
    #[serde(default)]
    pub cvr: Option<CastVoteRecords>,
    #[serde(default)]
    pub missing_cvr: MissingCvrPolicy,
    /// Operator's statement about the compliance audit; recorded, not checked.
    #[serde(default)]
    pub compliance_attestation: Option<String>,
}

fn default_gamma() -> f64 {
    comparison::DEFAULT_GAMMA
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    StoppedConfirmed,
    EscalatedFullHandCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ContinueSampling,
    StopConfirmed,
    RecommendFullHandCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub counter: u64,
    pub draw_number: u64,
    pub location: BallotLocation,
}

/// A reading supplied by the auditor for a found ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    Interpretation(Interpretation),
    /// Polling ballots per contest id; contests left out show no valid vote.
    PollingBallots(BTreeMap<String, PollingBallot>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Found {
        #[serde(flatten)]
        reading: Reading,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotation: Option<String>,
    },
    NotFound {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotation: Option<String>,
    },
}

impl Outcome {
    pub fn found(interpretation: Interpretation) -> Self {
        Outcome::Found {
            reading: Reading::Interpretation(interpretation),
            annotation: None,
        }
    }

    pub fn not_found() -> Self {
        Outcome::NotFound { annotation: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    /// A physical ballot was read.
    Human,
    /// A listed ballot could not be found; worst case substituted.
    NotFound,
    /// The draw lies past the manifest total; worst case substituted.
    UnlistedPhantom,
}

impl UpdateKind {
    pub fn is_zombie(self) -> bool {
        !matches!(self, UpdateKind::Human)
    }
}

/// Effect of one ballot on the test statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub counter: u64,
    pub kind: UpdateKind,
    /// Comparison audits: the overstatement applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overstatement: Option<i64>,
    /// Comparison: `[ln P]`. Polling: ln T for every pair of every contest in order.
    pub log_stats: Vec<f64>,
    pub p_value: f64,
    /// Set when the machine reading was missing and scored as undervotes.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub cvr_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub counter: u64,
    pub p_value: f64,
    pub kind: UpdateKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Engine {
    Comparison {
        params: ComparisonParams,
        state: ComparisonState,
    },
    Polling(Vec<(PollingSetup, PollingState)>),
}

impl Engine {
    fn p_value(&self) -> f64 {
        match self {
            Engine::Comparison { state, .. } => state.p_value(),
            Engine::Polling(contests) => contests
                .iter()
                .map(|(_, s)| s.polling_p_value())
                .fold(0.0, f64::max),
        }
    }

    fn log_stats(&self) -> Vec<f64> {
        match self {
            Engine::Comparison { state, .. } => alloc::vec![state.log_p],
            Engine::Polling(contests) => contests.iter().flat_map(|(_, s)| s.log_t.iter().copied()).collect(),
        }
    }

    fn apply_zombie(&mut self) -> Option<i64> {
        match self {
            Engine::Comparison { params, state } => {
                let o = comparison::zombie_interpretation_comparison();
                *state = state.km_update(o, params);
                Some(o.value() as i64)
            }
            Engine::Polling(contests) => {
                for (setup, state) in contests.iter_mut() {
                    // zombie ballots never name a candidate, so this cannot fail
                    if let Ok(next) = state.polling_update(&PollingBallot::ZombieAllLosers, setup) {
                        *state = next;
                    }
                }
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSession {
    config: AuditConfig,
    decision: ScenarioDecision,
    sampling_upper_bound: u64,
    engine: Engine,
    draws: Vec<DrawRecord>,
    pending: Option<DrawRecord>,
    status: SessionStatus,
    phantom_events: u64,
    cvr_missing: u64,
    trajectory: Vec<TrajectoryPoint>,
}

/// Result of [`AuditSession::next_draw`].
#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    pub draw: DrawRecord,
    /// Present when the draw was a phantom and was resolved immediately.
    pub auto_resolved: Option<UpdateRecord>,
}

impl AuditSession {
    pub fn start(config: AuditConfig) -> Result<Self, SessionError> {
        if !(config.risk_limit > 0.0 && config.risk_limit < 1.0) {
            return Err(SessionError::InvalidConfig(alloc::format!(
                "risk limit {} is outside (0, 1)",
                config.risk_limit
            )));
        }
        if config.contests.is_empty() {
            return Err(SessionError::InvalidConfig("no contests under audit".into()));
        }
        contest::check_unique_ids(&config.contests)?;
        if config.counts.n_manifest != config.manifest.total_listed() {
            return Err(SessionError::InvalidConfig(alloc::format!(
                "counts.n_manifest = {} but the manifest lists {} ballots",
                config.counts.n_manifest,
                config.manifest.total_listed()
            )));
        }
        if config.escalation_cap == Some(0) {
            return Err(SessionError::InvalidConfig("escalation cap must be positive".into()));
        }
        let margin = contest::smallest_margin(&config.contests);
        let decision = classify(config.counts, margin);
        let sampling_upper_bound = match decision {
            ScenarioDecision::Proceed {
                sampling_upper_bound,
                ..
            } => sampling_upper_bound,
            _ => return Err(SessionError::ScenarioHalt(decision)),
        };
        if decision.outcome_at_risk() && !config.acknowledge_margin_risk {
            return Err(SessionError::MarginRiskUnacknowledged);
        }
        let engine = match config.method {
            AuditMethod::Comparison => {
                if config.cvr.is_none() {
                    return Err(SessionError::InvalidConfig(
                        "comparison audits need cast vote records".into(),
                    ));
                }
                Engine::Comparison {
                    params: ComparisonParams::from_margin(margin, sampling_upper_bound, config.gamma)?,
                    state: ComparisonState::new(),
                }
            }
            AuditMethod::Polling => Engine::Polling(
                config
                    .contests
                    .iter()
                    .map(|c| {
                        let setup = PollingSetup::new(c.clone())?;
                        let state = PollingState::new(&setup);
                        Ok((setup, state))
                    })
                    .collect::<Result<_, PollingError>>()?,
            ),
        };
        Ok(Self {
            config,
            decision,
            sampling_upper_bound,
            engine,
            draws: Vec::new(),
            pending: None,
            status: SessionStatus::Active,
            phantom_events: 0,
            cvr_missing: 0,
            trajectory: Vec::new(),
        })
    }

    pub fn config(&self) -> &AuditConfig {
        &self.config
    }

    pub fn decision(&self) -> &ScenarioDecision {
        &self.decision
    }

    pub fn sampling_upper_bound(&self) -> u64 {
        self.sampling_upper_bound
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn draws(&self) -> &[DrawRecord] {
        &self.draws
    }

    pub fn pending(&self) -> Option<&DrawRecord> {
        self.pending.as_ref()
    }

    pub fn phantom_events(&self) -> u64 {
        self.phantom_events
    }

    pub fn cvr_missing(&self) -> u64 {
        self.cvr_missing
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }

    pub fn p_value(&self) -> f64 {
        self.engine.p_value()
    }

    /// ln P for comparison audits; ln T per pair for polling audits.
    pub fn log_stats(&self) -> Vec<f64> {
        self.engine.log_stats()
    }

    pub fn comparison_params(&self) -> Option<&ComparisonParams> {
        match &self.engine {
            Engine::Comparison { params, .. } => Some(params),
            Engine::Polling(_) => None,
        }
    }

    pub fn comparison_state(&self) -> Option<&ComparisonState> {
        match &self.engine {
            Engine::Comparison { state, .. } => Some(state),
            Engine::Polling(_) => None,
        }
    }

    pub fn polling_states(&self) -> Vec<(&PollingSetup, &PollingState)> {
        match &self.engine {
            Engine::Polling(v) => v.iter().map(|(a, b)| (a, b)).collect(),
            Engine::Comparison { .. } => Vec::new(),
        }
    }

    fn record_update(&mut self, counter: u64, kind: UpdateKind, overstatement: Option<i64>, cvr_missing: bool) -> UpdateRecord {
        let p_value = self.engine.p_value();
        if kind.is_zombie() {
            self.phantom_events += 1;
        }
        self.trajectory.push(TrajectoryPoint { counter, p_value, kind });
        UpdateRecord {
            counter,
            kind,
            overstatement,
            log_stats: self.engine.log_stats(),
            p_value,
            cvr_missing,
        }
    }

    pub fn next_draw(&mut self) -> Result<DrawOutcome, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive);
        }
        if self.pending.is_some() {
            return Err(SessionError::PendingInterpretation);
        }
        let counter = self.draws.len() as u64;
        let draw_number = draw_next(&self.config.seed, counter, self.sampling_upper_bound)?;
        let location = self.config.manifest.locate(draw_number, self.sampling_upper_bound)?;
        let draw = DrawRecord {
            counter,
            draw_number,
            location,
        };
        self.draws.push(draw.clone());
        if draw.location.is_phantom() {
            let o = self.engine.apply_zombie();
            let update = self.record_update(counter, UpdateKind::UnlistedPhantom, o, false);
            Ok(DrawOutcome {
                draw,
                auto_resolved: Some(update),
            })
        } else {
            self.pending = Some(draw.clone());
            Ok(DrawOutcome {
                draw,
                auto_resolved: None,
            })
        }
    }

    pub fn record_interpretation(&mut self, outcome: &Outcome) -> Result<UpdateRecord, SessionError> {
        let pending = self.pending.clone().ok_or(SessionError::NoPendingDraw)?;
        let (group_id, index) = match &pending.location {
            BallotLocation::Listed {
                group_id,
                index_within_group,
                ..
            } => (group_id.as_str(), *index_within_group),
            BallotLocation::UnlistedPhantom { .. } => unreachable!("phantom draws are never pending"),
        };
        let reading = match outcome {
            Outcome::NotFound { .. } => {
                let o = self.engine.apply_zombie();
                self.pending = None;
                return Ok(self.record_update(pending.counter, UpdateKind::NotFound, o, false));
            }
            Outcome::Found { reading, .. } => reading,
        };
        let mut missing = false;
        let overstatement = match (&mut self.engine, reading) {
            (Engine::Comparison { params, state }, Reading::Interpretation(human)) => {
                if human.provenance != Provenance::Human {
                    return Err(SessionError::InterpretationSchemaMismatch(
                        "found ballots must carry a human interpretation".into(),
                    ));
                }
                human.validate(&self.config.contests)?;
                let undervote = Interpretation::new(Provenance::Machine);
                let machine = match self.config.cvr.as_ref().and_then(|c| c.get(group_id, index)) {
                    Some(m) => m,
                    None if self.config.missing_cvr == MissingCvrPolicy::Error => {
                        return Err(SessionError::MissingCvr {
                            group_id: group_id.into(),
                            index,
                        })
                    }
                    None => {
                        missing = true;
                        &undervote
                    }
                };
                let o = max_overstatement(machine, human, &self.config.contests)?;
                *state = state.km_update(o, params);
                Some(o.value() as i64)
            }
            (Engine::Comparison { .. }, Reading::PollingBallots(_)) => {
                return Err(SessionError::InterpretationSchemaMismatch(
                    "polling ballots given to a comparison audit".into(),
                ))
            }
            (Engine::Polling(contests), reading) => {
                let ballots = polling_ballots(reading, contests, &self.config.contests)?;
                let mut next = Vec::with_capacity(contests.len());
                for ((setup, state), ballot) in contests.iter().zip(&ballots) {
                    next.push(state.polling_update(ballot, setup)?);
                }
                for ((_, state), n) in contests.iter_mut().zip(next) {
                    *state = n;
                }
                None
            }
        };
        if missing {
            self.cvr_missing += 1;
        }
        self.pending = None;
        Ok(self.record_update(pending.counter, UpdateKind::Human, overstatement, missing))
    }

    pub fn evaluate(&mut self) -> Result<Verdict, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive);
        }
        if self.pending.is_some() {
            return Err(SessionError::PendingInterpretation);
        }
        let verdict = if self.p_value() <= self.config.risk_limit {
            self.status = SessionStatus::StoppedConfirmed;
            Verdict::StopConfirmed
        } else if self
            .config
            .escalation_cap
            .is_some_and(|cap| self.draws.len() as u64 >= cap)
        {
            self.status = SessionStatus::EscalatedFullHandCount;
            Verdict::RecommendFullHandCount
        } else {
            Verdict::ContinueSampling
        };
        Ok(verdict)
    }
}

fn polling_ballots(
    reading: &Reading,
    engines: &[(PollingSetup, PollingState)],
    contests: &[ContestSetup],
) -> Result<Vec<PollingBallot>, SessionError> {
    match reading {
        Reading::Interpretation(interp) => {
            if interp.provenance != Provenance::Human {
                return Err(SessionError::InterpretationSchemaMismatch(
                    "found ballots must carry a human interpretation".into(),
                ));
            }
            interp.validate(contests)?;
            Ok(engines
                .iter()
                .map(|(setup, _)| {
                    let c = setup.contest();
                    PollingBallot::from_mark(interp.mark(c.contest_id()), c.k_seats())
                })
                .collect())
        }
        Reading::PollingBallots(map) => {
            for id in map.keys() {
                if !engines.iter().any(|(s, _)| s.contest().contest_id() == id) {
                    return Err(ContestError::UnknownContest(id.clone()).into());
                }
            }
            engines
                .iter()
                .map(|(setup, _)| match map.get(setup.contest().contest_id()) {
                    Some(PollingBallot::ZombieAllLosers) => Err(SessionError::InterpretationSchemaMismatch(
                        "a found ballot cannot be a zombie; report it as not found".into(),
                    )),
                    Some(b) => Ok(b.clone()),
                    None => Ok(PollingBallot::NoValidVote),
                })
                .collect()
        }
    }
}
