//! Command-line interface. Every command prints JSON to stdout; the
//! interactive `session` command prints one JSON object per input line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ezaudit_core::comparison::{initial_sample_size, ComparisonParams, DEFAULT_GAMMA};
use ezaudit_core::contest::{self, Interpretation};
use ezaudit_core::polling::PollingSetup;
use ezaudit_core::scenario::classify;
use ezaudit_core::session::{AuditConfig, AuditMethod, AuditSession, Outcome};
use ezaudit_core::simulator::{ManifestErrorModel, PopulationBuilder, RunMode};
use serde::Serialize;
use serde_json::json;

use crate::config::load_config;
use crate::log::{replay, LoggedSession};
use crate::server::{serve, AppState};
use crate::sim::{run_simulation, write_replicates_csv, SimulationSpec};
use crate::view::{Instruction, SessionView, TrajectoryView};

#[derive(Debug, Parser)]
#[command(name = "ezaudit", version, about = "Risk-limiting audits with worst-case substitution for missing ballots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config and report the scenario decision.
    Validate(ConfigArg),
    /// Report bounds, phantom count and the smallest possible sample.
    Plan(ConfigArg),
    /// Run an audit interactively, reading commands from stdin.
    Session(SessionArgs),
    /// Rebuild a session from its log and verify every record.
    Replay(ReplayArgs),
    /// Compare audits through a true and a corrupted manifest.
    Simulate(SimulateArgs),
    /// Serve the HTTP JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Log file; must not exist unless `--resume` is given.
    #[arg(long)]
    pub log: PathBuf,
    /// Replay an existing log and keep appending to it.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Include the full P-value trajectory.
    #[arg(long)]
    pub trajectory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorKind {
    None,
    Misfiled,
    Omitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Comparison,
    Polling,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// True number of ballots (N_O).
    #[arg(long, default_value_t = 10_000)]
    pub ballots: u64,
    #[arg(long, default_value_t = 100)]
    pub groups: u64,
    /// Reported diluted margin as a fraction of all ballots.
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
    /// Make the reported outcome wrong.
    #[arg(long)]
    pub reversed: bool,
    #[arg(long, value_enum, default_value_t = ErrorKind::None)]
    pub error_model: ErrorKind,
    /// Misfiled: number of grave/hellmouth pairs.
    #[arg(long, default_value_t = 10)]
    pub pairs: usize,
    /// Misfiled: ballots moved per pair.
    #[arg(long, default_value_t = 5)]
    pub magnitude: u64,
    /// Omitted: ballots left off the manifest.
    #[arg(long, default_value_t = 100)]
    pub omitted: u64,
    /// Bound the zombie arm samples up to (defaults to `--ballots`).
    #[arg(long)]
    pub n_upper: Option<u64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Comparison)]
    pub method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Sequential mode risk limit; without it every audit takes `--draws` ballots.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixed draws, or the escalation cap in sequential mode.
    #[arg(long, default_value_t = 200)]
    pub draws: u64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: u64,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    #[arg(long, default_value = "ezaudit-simulation")]
    pub seed: String,
    /// Write per-replicate records here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Stream each session's log into this directory.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, e: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn print_json<W: Write, T: Serialize>(out: &mut W, v: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(|e| Failure::new(1, e))?;
    writeln!(out).map_err(|e| Failure::new(1, e))
}

pub fn run<R: BufRead, W: Write>(cli: Cli, input: R, out: &mut W) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(a) => validate(&a, out),
        Command::Plan(a) => plan(&a, out),
        Command::Session(a) => session(&a, input, out),
        Command::Replay(a) => replay_cmd(&a, out),
        Command::Simulate(a) => simulate(&a, out),
        Command::Serve(a) => {
            let state = match a.log_dir {
                Some(dir) => AppState::with_log_dir(dir),
                None => AppState::default(),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, e))?;
            eprintln!("listening on {}", a.addr);
            rt.block_on(serve(&a.addr, Arc::new(state))).map_err(|e| Failure::new(1, e))
        }
    }
}

fn load(path: &PathBuf) -> Result<AuditConfig, Failure> {
    load_config(path).map_err(|e| Failure::new(1, e))
}

fn validate<W: Write>(a: &ConfigArg, out: &mut W) -> Result<(), Failure> {
    let config = load(&a.config)?;
    let decision = classify(config.counts, contest::smallest_margin(&config.contests));
    let started = AuditSession::start(config.clone());
    print_json(
        out,
        &json!({
            "decision": decision,
            "n_manifest": config.counts.n_manifest,
            "groups": config.manifest.groups().len(),
            "contests": config.contests.len(),
            "cvr_records": config.cvr.as_ref().map(|c| c.len()),
            "ok": started.is_ok(),
            "error": started.as_ref().err().map(|e| e.to_string()),
        }),
    )?;
    match started {
        Ok(_) => Ok(()),
        Err(e) => Err(Failure::new(2, e)),
    }
}

fn plan<W: Write>(a: &ConfigArg, out: &mut W) -> Result<(), Failure> {
    let config = load(&a.config)?;
    let session = AuditSession::start(config).map_err(|e| Failure::new(2, e))?;
    let config = session.config();
    let margin = contest::smallest_margin(&config.contests);
    let alpha = config.risk_limit;
    let detail = match config.method {
        AuditMethod::Comparison => {
            let params = ComparisonParams::from_margin(margin, session.sampling_upper_bound(), config.gamma)
                .map_err(|e| Failure::new(2, e))?;
            json!({
                "diluted_margin": params.diluted_margin(),
                "u_factor": params.u_factor(),
                "gamma": config.gamma,
                "min_sample_size": initial_sample_size(&params, alpha).map_err(|e| Failure::new(2, e))?,
            })
        }
        AuditMethod::Polling => {
            // every ballot a vote for the winner in the closest pair
            let mut worst = 0u64;
            let mut closest = 1.0f64;
            for c in &config.contests {
                let setup = PollingSetup::new(c.clone()).map_err(|e| Failure::new(2, e))?;
                for p in setup.pairs() {
                    let n = ((1.0 / alpha).ln() / p.ln_win()).ceil() as u64;
                    worst = worst.max(n);
                    closest = closest.min(p.share);
                }
            }
            json!({ "closest_pair_share": closest, "min_sample_size": worst })
        }
    };
    print_json(
        out,
        &json!({
            "method": config.method,
            "risk_limit": alpha,
            "decision": session.decision(),
            "sampling_upper_bound": session.sampling_upper_bound(),
            "smallest_margin_votes": margin,
            "plan": detail,
        }),
    )
}

const SESSION_HELP: &str = "commands: draw | found <interpretation JSON> | notfound [annotation] | \
record <outcome JSON> | evaluate | state | trajectory | help | quit";

fn session<R: BufRead, W: Write>(a: &SessionArgs, input: R, out: &mut W) -> Result<(), Failure> {
    let mut logged = if a.resume {
        let file = File::open(&a.log).map_err(|e| Failure::new(1, format!("{}: {e}", a.log.display())))?;
        let logged = replay(BufReader::new(file)).map_err(|e| Failure::new(3, e))?;
        let mut logged = logged;
        let sink = OpenOptions::new()
            .append(true)
            .open(&a.log)
            .map_err(|e| Failure::new(1, format!("{}: {e}", a.log.display())))?;
        logged.continue_sink(Box::new(BufWriter::new(sink)));
        logged
    } else {
        let path = a.config.as_ref().ok_or_else(|| Failure::new(1, "--config is required unless --resume"))?;
        let config = load(path)?;
        let mut logged = LoggedSession::start(config).map_err(|e| Failure::new(2, e))?;
        let file = File::create_new(&a.log).map_err(|e| Failure::new(1, format!("{}: {e}", a.log.display())))?;
        logged
            .attach_sink(Box::new(BufWriter::new(file)))
            .map_err(|e| Failure::new(1, e))?;
        logged
    };
    let line_out = |out: &mut W, v: serde_json::Value| -> Result<(), Failure> {
        serde_json::to_writer(&mut *out, &v).map_err(|e| Failure::new(1, e))?;
        writeln!(out).and_then(|_| out.flush()).map_err(|e| Failure::new(1, e))
    };
    line_out(out, json!({ "state": SessionView::of(&logged) }))?;
    for line in input.lines() {
        let line = line.map_err(|e| Failure::new(1, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let reply = match cmd {
            "quit" | "exit" => break,
            "help" => json!({ "help": SESSION_HELP }),
            "state" => json!({ "state": SessionView::of(&logged) }),
            "trajectory" => json!({ "trajectory": TrajectoryView::of(&logged) }),
            "evaluate" => match logged.evaluate() {
                Ok(v) => json!({ "verdict": v, "p_value": logged.session().p_value() }),
                Err(e) => json!({ "error": e.to_string() }),
            },
            "draw" => match logged.next_draw() {
                Ok(d) => {
                    let verdict = match d.auto_resolved {
                        Some(_) => logged.evaluate().ok(),
                        None => None,
                    };
                    json!({
                        "draw": d.draw,
                        "instruction": Instruction::for_draw(&d.draw),
                        "auto_resolved": d.auto_resolved,
                        "verdict": verdict,
                        "p_value": logged.session().p_value(),
                    })
                }
                Err(e) => json!({ "error": e.to_string() }),
            },
            "found" | "notfound" | "record" => {
                let outcome: Result<Outcome, String> = match cmd {
                    "found" => serde_json::from_str::<Interpretation>(rest)
                        .map(Outcome::found)
                        .map_err(|e| e.to_string()),
                    "notfound" => Ok(Outcome::NotFound {
                        annotation: (!rest.is_empty()).then(|| rest.to_string()),
                    }),
                    _ => serde_json::from_str::<Outcome>(rest).map_err(|e| e.to_string()),
                };
                match outcome {
                    Err(e) => json!({ "error": format!("bad JSON: {e}") }),
                    Ok(o) => match logged.record_interpretation(&o) {
                        Ok(update) => {
                            let verdict = logged.evaluate().ok();
                            json!({ "update": update, "verdict": verdict })
                        }
                        Err(e) => json!({ "error": e.to_string() }),
                    },
                }
            }
            other => json!({ "error": format!("unknown command `{other}`; {SESSION_HELP}") }),
        };
        line_out(out, reply)?;
    }
    Ok(())
}

fn replay_cmd<W: Write>(a: &ReplayArgs, out: &mut W) -> Result<(), Failure> {
    let file = File::open(&a.log).map_err(|e| Failure::new(1, format!("{}: {e}", a.log.display())))?;
    let logged = replay(BufReader::new(file)).map_err(|e| Failure::new(3, e))?;
    let mut v = json!({ "verified_records": logged.records().len(), "state": SessionView::of(&logged) });
    if a.trajectory {
        v["trajectory"] = serde_json::to_value(TrajectoryView::of(&logged)).map_err(|e| Failure::new(1, e))?;
    }
    print_json(out, &v)
}

pub fn simulation_spec(a: &SimulateArgs) -> SimulationSpec {
    let error_model = match a.error_model {
        ErrorKind::None => ManifestErrorModel::default(),
        ErrorKind::Misfiled => ManifestErrorModel::misfiled(a.pairs, a.magnitude),
        ErrorKind::Omitted => ManifestErrorModel::omitted(a.omitted),
    };
    SimulationSpec {
        population: PopulationBuilder::with_margin(a.ballots, a.groups, a.margin, 1),
        reversed_outcome: a.reversed,
        error_model,
        error_seed: 2,
        n_upper: a.n_upper,
        method: match a.method {
            MethodArg::Comparison => AuditMethod::Comparison,
            MethodArg::Polling => AuditMethod::Polling,
        },
        gamma: a.gamma,
        mode: match a.alpha {
            Some(alpha) => RunMode::Sequential { alpha, cap: a.draws },
            None => RunMode::FixedN { draws: a.draws },
        },
        replicates: a.replicates,
        confidence: a.confidence,
        master_seed: a.seed.clone(),
    }
}

fn simulate<W: Write>(a: &SimulateArgs, out: &mut W) -> Result<(), Failure> {
    let spec = simulation_spec(a);
    let run = run_simulation(&spec).map_err(|e| Failure::new(2, e))?;
    if let Some(path) = &a.csv {
        let f = File::create(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
        write_replicates_csv(&run.pairs, BufWriter::new(f)).map_err(|e| Failure::new(1, e))?;
    }
    print_json(out, &run.report)
}
