#![allow(dead_code)]

use ezaudit::log::LoggedSession;
use ezaudit_core::contest::{ContestMark, ContestSetup, Interpretation, Provenance};
use ezaudit_core::manifest::{BallotLocation, BallotManifest};
use ezaudit_core::sampling::AuditSeed;
use ezaudit_core::scenario::BallotCounts;
use ezaudit_core::session::{AuditConfig, AuditMethod, CastVoteRecords, MissingCvrPolicy, Outcome, Verdict};

pub fn vote(c: &str, p: Provenance) -> Interpretation {
    Interpretation::new(p).with("mayor", ContestMark::vote_for([c]))
}

/// 100 listed ballots in 4 boxes; the CVR says alice on the first 60 in
/// listing order and bob on the rest. Draws above 100 are phantoms.
pub fn config(method: AuditMethod, n_upper: u64) -> AuditConfig {
    let manifest = BallotManifest::from_counts([("box-1", 25), ("box-2", 25), ("box-3", 25), ("box-4", 25)]).unwrap();
    let mut cvr = CastVoteRecords::default();
    let mut n = 0;
    for g in manifest.groups() {
        for j in 1..=g.claimed_count {
            let who = if n < 60 { "alice" } else { "bob" };
            cvr.insert(g.group_id.clone(), j, vote(who, Provenance::Machine));
            n += 1;
        }
    }
    AuditConfig {
        method,
        counts: BallotCounts::with_upper(manifest.total_listed(), n_upper),
        manifest,
        contests: vec![ContestSetup::plurality("mayor", [("alice", 60), ("bob", 40)]).unwrap()],
        risk_limit: 0.1,
        gamma: 1.03905,
        seed: AuditSeed::new(*b"log fixture seed", "fixture").unwrap(),
        escalation_cap: Some(400),
        acknowledge_margin_risk: false,
        cvr: Some(cvr),
        missing_cvr: MissingCvrPolicy::Undervote,
        compliance_attestation: Some("reconciled".into()),
    }
}

/// What the auditor reports for a listed ballot: the CVR reading, except
/// that ballot 7 of box-3 cannot be found and ballot 3 of box-1 shows bob.
pub fn auditor_outcome(config: &AuditConfig, location: &BallotLocation) -> Outcome {
    let BallotLocation::Listed {
        group_id,
        index_within_group,
        ..
    } = location
    else {
        panic!("phantoms are never pending")
    };
    if group_id == "box-3" && *index_within_group == 7 {
        return Outcome::NotFound {
            annotation: Some("searched twice".into()),
        };
    }
    if group_id == "box-1" && *index_within_group == 3 {
        return Outcome::found(vote("bob", Provenance::Human));
    }
    let mut m = config.cvr.as_ref().unwrap().get(group_id, *index_within_group).unwrap().clone();
    m.provenance = Provenance::Human;
    Outcome::found(m)
}

/// Draw and record until a terminal verdict or `max_draws` draws.
pub fn drive(logged: &mut LoggedSession, max_draws: usize) -> Option<Verdict> {
    for _ in 0..max_draws {
        let out = logged.next_draw().unwrap();
        if out.auto_resolved.is_none() {
            let outcome = auditor_outcome(logged.session().config(), &out.draw.location);
            logged.record_interpretation(&outcome).unwrap();
        }
        let v = logged.evaluate().unwrap();
        if v != Verdict::ContinueSampling {
            return Some(v);
        }
    }
    None
}

pub fn fixed_clock() -> String {
    "2024-11-05T20:00:00.000Z".into()
}
