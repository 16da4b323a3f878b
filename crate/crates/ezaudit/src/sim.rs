//! Parallel driver for simulator experiments, with JSON and CSV output.

use std::io::Write;

use ezaudit_core::session::AuditMethod;
use ezaudit_core::simulator::{
    dominance_check, perturb_manifest, risk_estimate, Experiment, ManifestErrorModel, PopulationBuilder,
    PopulationSpec, ReplicatePair, ReplicateRecord, RiskEstimate, RunMode, SimError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub population: PopulationBuilder,
    #[serde(default)]
    pub reversed_outcome: bool,
    #[serde(default)]
    pub error_model: ManifestErrorModel,
    #[serde(default)]
    pub error_seed: u64,
    /// Bound the zombie arm samples up to; defaults to the true ballot count.
    #[serde(default)]
    pub n_upper: Option<u64>,
    pub method: AuditMethod,
    pub gamma: f64,
    pub mode: RunMode,
    pub replicates: u64,
    pub confidence: f64,
    pub master_seed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub mean_final_p: f64,
    pub stopped_fraction: f64,
    pub mean_draws: f64,
    pub median_draws: u64,
    pub p90_draws: u64,
    pub mean_zombies: f64,
}

impl ArmSummary {
    fn of(records: &[ReplicateRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mut draws: Vec<u64> = records.iter().map(|r| r.draws_used).collect();
        draws.sort_unstable();
        let quantile = |q: f64| -> u64 {
            if draws.is_empty() {
                0
            } else {
                draws[((draws.len() - 1) as f64 * q).round() as usize]
            }
        };
        Self {
            mean_final_p: records.iter().map(|r| r.final_p).sum::<f64>() / n,
            stopped_fraction: records.iter().filter(|r| r.stopped_without_full_count).count() as f64 / n,
            mean_draws: draws.iter().sum::<u64>() as f64 / n,
            median_draws: quantile(0.5),
            p90_draws: quantile(0.9),
            mean_zombies: records.iter().map(|r| r.zombies).sum::<u64>() as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceSummary {
    pub confidence: f64,
    pub max_cdf_violation: f64,
    pub dkw_epsilon: f64,
    /// Whether the zombie arm's P-values are stochastically at least as large
    /// as the truth arm's, up to sampling error.
    pub zombie_dominates_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub truth: RiskEstimate,
    pub zombie: RiskEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: SimulationSpec,
    pub n_true: u64,
    pub n_manifest: u64,
    pub n_upper: u64,
    pub graves: usize,
    pub hellmouths: usize,
    pub reported_outcome_wrong: bool,
    pub truth: ArmSummary,
    pub zombie: ArmSummary,
    pub dominance: DominanceSummary,
    /// Present only when the reported outcome is wrong.
    pub risk: Option<RiskSummary>,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub population: PopulationSpec,
    pub pairs: Vec<ReplicatePair>,
    pub report: SimulationReport,
}

pub fn build_population(spec: &SimulationSpec) -> Result<PopulationSpec, SimError> {
    let builder = if spec.reversed_outcome {
        spec.population.reversed_outcome()
    } else {
        spec.population
    };
    let pop = builder.build()?;
    let manifest = perturb_manifest(pop.true_group_counts(), &spec.error_model, spec.error_seed)?;
    pop.with_manifest(manifest)
}

/// Run every replicate in parallel. Results do not depend on the thread count.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationRun, SimError> {
    let pop = build_population(spec)?;
    let n_upper = spec.n_upper.unwrap_or_else(|| pop.n_true());
    let exp = Experiment::new(&pop, spec.method, spec.gamma, n_upper, spec.mode)?;
    let seed = spec.master_seed.as_bytes();
    let pairs: Vec<ReplicatePair> = (0..spec.replicates)
        .into_par_iter()
        .map(|i| exp.run_replicate(&pop, seed, i))
        .collect();
    let truth: Vec<ReplicateRecord> = pairs.iter().map(|p| p.truth).collect();
    let zombie: Vec<ReplicateRecord> = pairs.iter().map(|p| p.zombie).collect();
    let zp: Vec<f64> = zombie.iter().map(|r| r.final_p).collect();
    let tp: Vec<f64> = truth.iter().map(|r| r.final_p).collect();
    let dom = dominance_check(&zp, &tp, spec.confidence)?;
    let risk = if pop.reported_outcome_wrong() {
        Some(RiskSummary {
            truth: risk_estimate(&pop, &truth)?,
            zombie: risk_estimate(&pop, &zombie)?,
        })
    } else {
        None
    };
    let report = SimulationReport {
        spec: spec.clone(),
        n_true: pop.n_true(),
        n_manifest: pop.reported_manifest().total_listed(),
        n_upper,
        graves: pop.graves().len(),
        hellmouths: pop.hellmouths().len(),
        reported_outcome_wrong: pop.reported_outcome_wrong(),
        truth: ArmSummary::of(&truth),
        zombie: ArmSummary::of(&zombie),
        dominance: DominanceSummary {
            confidence: spec.confidence,
            max_cdf_violation: dom.max_cdf_violation,
            dkw_epsilon: dom.dkw_epsilon,
            zombie_dominates_truth: dom.dominates,
        },
        risk,
    };
    Ok(SimulationRun {
        population: pop,
        pairs,
        report,
    })
}

#[derive(Serialize)]
struct CsvRow {
    replicate: u64,
    truth_final_p: f64,
    truth_stopped: bool,
    truth_draws: u64,
    zombie_final_p: f64,
    zombie_stopped: bool,
    zombie_draws: u64,
    zombie_substitutions: u64,
}

pub fn write_replicates_csv<W: Write>(pairs: &[ReplicatePair], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for p in pairs {
        w.serialize(CsvRow {
            replicate: p.index,
            truth_final_p: p.truth.final_p,
            truth_stopped: p.truth.stopped_without_full_count,
            truth_draws: p.truth.draws_used,
            zombie_final_p: p.zombie.final_p,
            zombie_stopped: p.zombie.stopped_without_full_count,
            zombie_draws: p.zombie.draws_used,
            zombie_substitutions: p.zombie.zombies,
        })?;
    }
    w.flush()?;
    Ok(())
}
