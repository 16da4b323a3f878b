//! Append-only, hash-chained session log.
//!
//! One JSON object per line:
//!
//! ```text
//! {"seq":3,"kind":"interpretation","timestamp":"…","payload":{…},"prev":"<hex>","digest":"<hex>"}
//! ```
//!
//! `digest = SHA-256(prev ‖ "\n" ‖ canonical({seq, kind, timestamp, payload}))`
//! in lowercase hex, where canonical JSON has object keys sorted and floats in
//! shortest round-trip form. The header's `prev` is 64 zeros.
//!
//! Replay recomputes every draw from the seed and every update from the
//! logged outcomes, then compares against what was logged. A wrong draw is a
//! [`ReplayError::DrawMismatch`]; a wrong update, P-value or state digest is a
//! [`ReplayError::StateDigestMismatch`]; anything else that breaks the chain
//! (edited timestamps, annotations, reordered or missing records) is
//! [`ReplayError::LogCorrupt`].

use std::io::{BufRead, Write};

use chrono::{SecondsFormat, Utc};
use ezaudit_core::manifest::BallotLocation;
use ezaudit_core::scenario::ScenarioDecision;
use ezaudit_core::session::{
    AuditConfig, AuditSession, DrawOutcome, DrawRecord, Outcome, SessionError, SessionStatus, UpdateKind,
    UpdateRecord, Verdict,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FORMAT: &str = "ezaudit-session-log/1";
pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Header,
    Draw,
    Interpretation,
    Zombie,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub seq: u64,
    pub kind: RecordKind,
    pub timestamp: String,
    pub payload: Value,
    pub prev: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderPayload {
    pub format: String,
    pub config: AuditConfig,
    pub config_digest: String,
    pub decision: ScenarioDecision,
    pub sampling_upper_bound: u64,
    /// Group ids in the order draws are mapped onto them.
    pub canonical_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawPayload {
    pub counter: u64,
    pub draw_number: u64,
    pub location: BallotLocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationPayload {
    pub counter: u64,
    pub outcome: Outcome,
    pub update: UpdateRecord,
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZombiePayload {
    pub counter: u64,
    pub cause: UpdateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
    pub update: UpdateRecord,
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPayload {
    pub verdict: Verdict,
    pub p_value: f64,
    pub draws_issued: u64,
    pub state_digest: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("record {seq}: log corrupt: {reason}")]
    LogCorrupt { seq: u64, reason: String },
    #[error("record {seq}: logged draw {logged} but the seed gives {recomputed}")]
    DrawMismatch { seq: u64, logged: u64, recomputed: u64 },
    #[error("record {seq}: recomputed state differs from the log: {what}")]
    StateDigestMismatch { seq: u64, what: String },
    #[error("record {seq}: session rejected a logged step: {source}")]
    Session { seq: u64, source: SessionError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical JSON text: keys sorted, shortest round-trip floats.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("log types serialize to JSON");
    serde_json::to_string(&v).expect("JSON values serialize")
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn config_digest(config: &AuditConfig) -> String {
    sha256_hex(canonical_json(config).as_bytes())
}

/// Digest of the mutable session state visible to an auditor.
pub fn state_digest(session: &AuditSession, config_digest: &str) -> String {
    #[derive(Serialize)]
    struct Snapshot<'a> {
        config_digest: &'a str,
        draws_issued: usize,
        pending: Option<u64>,
        status: SessionStatus,
        phantom_events: u64,
        cvr_missing: u64,
        log_stats: Vec<f64>,
        p_value: f64,
    }
    let snap = Snapshot {
        config_digest,
        draws_issued: session.draws().len(),
        pending: session.pending().map(|d| d.counter),
        status: session.status(),
        phantom_events: session.phantom_events(),
        cvr_missing: session.cvr_missing(),
        log_stats: session.log_stats(),
        p_value: session.p_value(),
    };
    sha256_hex(canonical_json(&snap).as_bytes())
}

fn record_digest(prev: &str, seq: u64, kind: RecordKind, timestamp: &str, payload: &Value) -> String {
    #[derive(Serialize)]
    struct Body<'a> {
        seq: u64,
        kind: RecordKind,
        timestamp: &'a str,
        payload: &'a Value,
    }
    let body = canonical_json(&Body {
        seq,
        kind,
        timestamp,
        payload,
    });
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(b"\n");
    h.update(body.as_bytes());
    hex::encode(h.finalize())
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// A session whose every step is appended to the log before it is reported.
pub struct LoggedSession {
    session: AuditSession,
    config_digest: String,
    records: Vec<LogRecord>,
    sink: Option<Box<dyn Write + Send>>,
    clock: fn() -> String,
}

impl std::fmt::Debug for LoggedSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoggedSession")
            .field("session", &self.session)
            .field("config_digest", &self.config_digest)
            .field("records", &self.records.len())
            .finish()
    }
}

impl LoggedSession {
    pub fn start(config: AuditConfig) -> Result<Self, LogError> {
        Self::start_with_clock(config, now_rfc3339)
    }

    pub fn start_with_clock(config: AuditConfig, clock: fn() -> String) -> Result<Self, LogError> {
        let session = AuditSession::start(config)?;
        let digest = config_digest(session.config());
        let header = HeaderPayload {
            format: FORMAT.into(),
            canonical_order: session.config().manifest.groups().iter().map(|g| g.group_id.clone()).collect(),
            config: session.config().clone(),
            config_digest: digest.clone(),
            decision: session.decision().clone(),
            sampling_upper_bound: session.sampling_upper_bound(),
        };
        let mut s = Self {
            session,
            config_digest: digest,
            records: Vec::new(),
            sink: None,
            clock,
        };
        s.append(RecordKind::Header, &header)?;
        Ok(s)
    }

    /// Write every record so far to `sink`, then keep it up to date.
    pub fn attach_sink(&mut self, mut sink: Box<dyn Write + Send>) -> std::io::Result<()> {
        for r in &self.records {
            write_record(&mut sink, r)?;
        }
        sink.flush()?;
        self.sink = Some(sink);
        Ok(())
    }

    /// Append future records to `sink`, which already holds the history
    /// (a replayed log file opened for appending).
    pub fn continue_sink(&mut self, sink: Box<dyn Write + Send>) {
        self.sink = Some(sink);
    }

    pub fn session(&self) -> &AuditSession {
        &self.session
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn state_digest(&self) -> String {
        state_digest(&self.session, &self.config_digest)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            write_record(&mut out, r)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    fn append<T: Serialize>(&mut self, kind: RecordKind, payload: &T) -> Result<(), LogError> {
        let payload = serde_json::to_value(payload).expect("log payloads serialize");
        let seq = self.records.len() as u64;
        let prev = self.records.last().map_or_else(|| GENESIS.to_string(), |r| r.digest.clone());
        let timestamp = (self.clock)();
        let digest = record_digest(&prev, seq, kind, &timestamp, &payload);
        let record = LogRecord {
            seq,
            kind,
            timestamp,
            payload,
            prev,
            digest,
        };
        if let Some(sink) = self.sink.as_mut() {
            write_record(sink, &record)?;
            sink.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn next_draw(&mut self) -> Result<DrawOutcome, LogError> {
        let out = self.session.next_draw()?;
        self.append(RecordKind::Draw, &draw_payload(&out.draw))?;
        if let Some(update) = &out.auto_resolved {
            let payload = ZombiePayload {
                counter: update.counter,
                cause: UpdateKind::UnlistedPhantom,
                annotation: None,
                update: update.clone(),
                state_digest: self.state_digest(),
            };
            self.append(RecordKind::Zombie, &payload)?;
        }
        Ok(out)
    }

    pub fn record_interpretation(&mut self, outcome: &Outcome) -> Result<UpdateRecord, LogError> {
        let update = self.session.record_interpretation(outcome)?;
        let state_digest = self.state_digest();
        match outcome {
            Outcome::NotFound { annotation } => self.append(
                RecordKind::Zombie,
                &ZombiePayload {
                    counter: update.counter,
                    cause: UpdateKind::NotFound,
                    annotation: annotation.clone(),
                    update: update.clone(),
                    state_digest,
                },
            )?,
            Outcome::Found { .. } => self.append(
                RecordKind::Interpretation,
                &InterpretationPayload {
                    counter: update.counter,
                    outcome: outcome.clone(),
                    update: update.clone(),
                    state_digest,
                },
            )?,
        }
        Ok(update)
    }

    /// Evaluate the stopping rule; terminal verdicts are logged.
    pub fn evaluate(&mut self) -> Result<Verdict, LogError> {
        let verdict = self.session.evaluate()?;
        if verdict != Verdict::ContinueSampling {
            let payload = DecisionPayload {
                verdict,
                p_value: self.session.p_value(),
                draws_issued: self.session.draws().len() as u64,
                state_digest: self.state_digest(),
            };
            self.append(RecordKind::Decision, &payload)?;
        }
        Ok(verdict)
    }
}

fn draw_payload(d: &DrawRecord) -> DrawPayload {
    DrawPayload {
        counter: d.counter,
        draw_number: d.draw_number,
        location: d.location.clone(),
    }
}

fn write_record<W: Write + ?Sized>(out: &mut W, r: &LogRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, r)?;
    out.write_all(b"\n")
}

fn payload<T: DeserializeOwned>(r: &LogRecord) -> Result<T, ReplayError> {
    serde_json::from_value(r.payload.clone()).map_err(|e| ReplayError::LogCorrupt {
        seq: r.seq,
        reason: format!("{:?} payload: {e}", r.kind),
    })
}

fn mismatch(seq: u64, what: impl Into<String>) -> ReplayError {
    ReplayError::StateDigestMismatch { seq, what: what.into() }
}

fn check_update(seq: u64, logged: &UpdateRecord, recomputed: &UpdateRecord) -> Result<(), ReplayError> {
    if logged == recomputed {
        Ok(())
    } else {
        Err(mismatch(
            seq,
            format!(
                "update for draw {} logged P = {} but recomputed P = {}",
                logged.counter, logged.p_value, recomputed.p_value
            ),
        ))
    }
}

/// Rebuild a session from its log, checking every step. The returned session
/// can keep going; new records continue the same chain.
pub fn replay<R: BufRead>(source: R) -> Result<LoggedSession, ReplayError> {
    let mut records = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: LogRecord = serde_json::from_str(&line).map_err(|e| ReplayError::LogCorrupt {
            seq: i as u64,
            reason: format!("unparseable record: {e}"),
        })?;
        records.push(r);
    }
    replay_records(records)
}

pub fn replay_records(records: Vec<LogRecord>) -> Result<LoggedSession, ReplayError> {
    let mut iter = records.into_iter();
    let first = iter.next().ok_or(ReplayError::LogCorrupt {
        seq: 0,
        reason: "empty log".into(),
    })?;
    if first.kind != RecordKind::Header || first.seq != 0 || first.prev != GENESIS {
        return Err(ReplayError::LogCorrupt {
            seq: 0,
            reason: "log must open with a header record chained to the genesis digest".into(),
        });
    }
    let header: HeaderPayload = payload(&first)?;
    if header.format != FORMAT {
        return Err(ReplayError::LogCorrupt {
            seq: 0,
            reason: format!("unknown log format `{}`", header.format),
        });
    }
    let digest = config_digest(&header.config);
    if digest != header.config_digest {
        return Err(mismatch(0, "config digest"));
    }
    let session =
        AuditSession::start(header.config.clone()).map_err(|source| ReplayError::Session { seq: 0, source })?;
    if session.decision() != &header.decision || session.sampling_upper_bound() != header.sampling_upper_bound {
        return Err(mismatch(0, "scenario decision"));
    }
    let order: Vec<&str> = session.config().manifest.groups().iter().map(|g| g.group_id.as_str()).collect();
    if order != header.canonical_order {
        return Err(mismatch(0, "canonical group order"));
    }
    verify_digest(&first)?;
    let mut logged = LoggedSession {
        session,
        config_digest: digest,
        records: vec![first],
        sink: None,
        clock: now_rfc3339,
    };

    // a phantom draw must be followed by its zombie record
    let mut awaiting_auto: Option<UpdateRecord> = None;
    for r in iter {
        let seq = logged.records.len() as u64;
        if r.seq != seq {
            return Err(ReplayError::LogCorrupt {
                seq,
                reason: format!("expected seq {seq}, found {}", r.seq),
            });
        }
        if r.prev != logged.records[seq as usize - 1].digest {
            return Err(ReplayError::LogCorrupt {
                seq,
                reason: "prev does not match the preceding record's digest".into(),
            });
        }
        if awaiting_auto.is_some() && r.kind != RecordKind::Zombie {
            return Err(ReplayError::LogCorrupt {
                seq,
                reason: "phantom draw is not followed by its zombie record".into(),
            });
        }
        let session_err = |source| ReplayError::Session { seq, source };
        match r.kind {
            RecordKind::Header => {
                return Err(ReplayError::LogCorrupt {
                    seq,
                    reason: "second header".into(),
                })
            }
            RecordKind::Draw => {
                let p: DrawPayload = payload(&r)?;
                let out = logged.session.next_draw().map_err(session_err)?;
                if p.counter != out.draw.counter || p.draw_number != out.draw.draw_number {
                    return Err(ReplayError::DrawMismatch {
                        seq,
                        logged: p.draw_number,
                        recomputed: out.draw.draw_number,
                    });
                }
                if p.location != out.draw.location {
                    return Err(mismatch(seq, "ballot location"));
                }
                awaiting_auto = out.auto_resolved;
            }
            RecordKind::Zombie => {
                let p: ZombiePayload = payload(&r)?;
                let recomputed = match awaiting_auto.take() {
                    Some(u) => {
                        if p.cause != UpdateKind::UnlistedPhantom || p.annotation.is_some() {
                            return Err(mismatch(seq, "zombie cause"));
                        }
                        u
                    }
                    None => {
                        if p.cause != UpdateKind::NotFound {
                            return Err(mismatch(seq, "zombie cause"));
                        }
                        let outcome = Outcome::NotFound {
                            annotation: p.annotation.clone(),
                        };
                        logged.session.record_interpretation(&outcome).map_err(session_err)?
                    }
                };
                check_update(seq, &p.update, &recomputed)?;
                if p.counter != recomputed.counter || p.state_digest != logged.state_digest() {
                    return Err(mismatch(seq, "state digest"));
                }
            }
            RecordKind::Interpretation => {
                let p: InterpretationPayload = payload(&r)?;
                if matches!(p.outcome, Outcome::NotFound { .. }) {
                    return Err(mismatch(seq, "not-found outcome logged as an interpretation"));
                }
                let recomputed = logged.session.record_interpretation(&p.outcome).map_err(session_err)?;
                check_update(seq, &p.update, &recomputed)?;
                if p.counter != recomputed.counter || p.state_digest != logged.state_digest() {
                    return Err(mismatch(seq, "state digest"));
                }
            }
            RecordKind::Decision => {
                let p: DecisionPayload = payload(&r)?;
                let verdict = logged.session.evaluate().map_err(session_err)?;
                if verdict != p.verdict {
                    return Err(mismatch(seq, format!("logged {:?} but recomputed {verdict:?}", p.verdict)));
                }
                if p.p_value != logged.session.p_value()
                    || p.draws_issued != logged.session.draws().len() as u64
                    || p.state_digest != logged.state_digest()
                {
                    return Err(mismatch(seq, "decision state"));
                }
            }
        }
        verify_digest(&r)?;
        logged.records.push(r);
    }
    if awaiting_auto.is_some() {
        return Err(ReplayError::LogCorrupt {
            seq: logged.records.len() as u64,
            reason: "log ends between a phantom draw and its zombie record".into(),
        });
    }
    Ok(logged)
}

fn verify_digest(r: &LogRecord) -> Result<(), ReplayError> {
    let want = record_digest(&r.prev, r.seq, r.kind, &r.timestamp, &r.payload);
    if want == r.digest {
        Ok(())
    } else {
        Err(ReplayError::LogCorrupt {
            seq: r.seq,
            reason: "digest does not match record contents".into(),
        })
    }
}
