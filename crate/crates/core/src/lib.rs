//! Risk-limiting audit math that stays conservative when the ballot manifest
//! is wrong.
//!
//! Draws are taken uniformly from `1..=N` where `N` is the true ballot count
//! (when known) or an upper bound on it. Each draw is resolved through the
//! manifest. Whenever the drawn ballot cannot be produced, either because the
//! manifest lists it but the container is short or because the draw lies past
//! the end of the manifest, the audit substitutes the interpretation that
//! raises the P-value the most: a 2-vote overstatement for ballot-level
//! comparison audits, or a valid vote for every loser for ballot-polling
//! audits.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the session log,
//! the HTTP service and the CLI live in the `ezaudit` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod comparison;
pub mod contest;
pub mod manifest;
pub mod polling;
pub mod sampling;
pub mod scenario;
pub mod session;
pub mod simulator;
mod wide;

pub use comparison::{ComparisonParams, ComparisonState, Overstatement};
pub use contest::{ContestMark, ContestSetup, Interpretation, Provenance};
pub use manifest::{BallotLocation, BallotManifest, ManifestGroup};
pub use polling::{PollingBallot, PollingSetup, PollingState};
pub use sampling::{AuditSeed, DrawSequence};
pub use scenario::{classify, BallotCounts, MarginErasureWarning, ScenarioDecision};
pub use session::{AuditConfig, AuditMethod, AuditSession, Outcome, SessionStatus, Verdict};
