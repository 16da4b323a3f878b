//! JSON views of a running session, shared by the HTTP service and the CLI.

use ezaudit_core::contest::ContestSetup;
use ezaudit_core::manifest::BallotLocation;
use ezaudit_core::scenario::ScenarioDecision;
use ezaudit_core::session::{AuditMethod, DrawRecord, SessionStatus, TrajectoryPoint};
use serde::{Deserialize, Serialize};

use crate::log::LoggedSession;

/// Where to find a pending ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub counter: u64,
    pub draw_number: u64,
    pub group_id: String,
    pub group_ordinal: usize,
    pub index_within_group: u64,
    pub text: String,
}

impl Instruction {
    pub fn for_draw(d: &DrawRecord) -> Option<Self> {
        match &d.location {
            BallotLocation::Listed {
                group_ordinal,
                index_within_group,
                group_id,
            } => Some(Self {
                counter: d.counter,
                draw_number: d.draw_number,
                group_id: group_id.clone(),
                group_ordinal: *group_ordinal,
                index_within_group: *index_within_group,
                text: format!("retrieve ballot {index_within_group} of group {group_ordinal} (`{group_id}`)"),
            }),
            BallotLocation::UnlistedPhantom { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub method: AuditMethod,
    pub risk_limit: f64,
    pub status: SessionStatus,
    pub p_value: f64,
    pub draws_issued: u64,
    pub phantom_events: u64,
    pub cvr_missing: u64,
    pub sampling_upper_bound: u64,
    pub decision: ScenarioDecision,
    pub pending: Option<Instruction>,
    pub contests: Vec<ContestSetup>,
    pub escalation_cap: Option<u64>,
    pub config_digest: String,
    pub state_digest: String,
    pub log_records: u64,
}

impl SessionView {
    pub fn of(logged: &LoggedSession) -> Self {
        let s = logged.session();
        Self {
            method: s.config().method,
            risk_limit: s.config().risk_limit,
            status: s.status(),
            p_value: s.p_value(),
            draws_issued: s.draws().len() as u64,
            phantom_events: s.phantom_events(),
            cvr_missing: s.cvr_missing(),
            sampling_upper_bound: s.sampling_upper_bound(),
            decision: s.decision().clone(),
            pending: s.pending().and_then(Instruction::for_draw),
            contests: s.config().contests.clone(),
            escalation_cap: s.config().escalation_cap,
            config_digest: logged.config_digest().to_string(),
            state_digest: logged.state_digest(),
            log_records: logged.records().len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub risk_limit: f64,
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectoryView {
    pub fn of(logged: &LoggedSession) -> Self {
        Self {
            risk_limit: logged.session().config().risk_limit,
            points: logged.session().trajectory().to_vec(),
        }
    }
}
