use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::population::PopulationSpec;
use super::replicate::ReplicateRecord;
use super::SimError;

/// One-sided empirical check that arm A's P-values are stochastically larger
/// than arm B's: `Pr(A ≥ t) ≥ Pr(B ≥ t) − ε` at every pooled sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub replicates: usize,
    pub p_values_zombie: Vec<f64>,
    pub p_values_truth: Vec<f64>,
    /// Largest excess of `Pr(B ≥ t)` over `Pr(A ≥ t)`, zero when none.
    pub max_cdf_violation: f64,
    /// Threshold: the sum of the two arms' DKW half-widths.
    pub dkw_epsilon: f64,
    pub dominates: bool,
}

/// DKW half-width for `n` samples at the given two-sided confidence.
pub fn dkw_epsilon(n: usize, confidence: f64) -> f64 {
    libm::sqrt(libm::log(2.0 / (1.0 - confidence)) / (2.0 * n as f64))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

// fraction of `sorted` strictly below t
fn frac_below(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&x| x < t) as f64 / sorted.len() as f64
}

pub fn dominance_check(arm_a: &[f64], arm_b: &[f64], confidence: f64) -> Result<DominanceReport, SimError> {
    if arm_a.is_empty() || arm_b.is_empty() {
        return Err(SimError::EmptySample);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(SimError::Setup(alloc::format!("confidence {confidence} outside (0, 1)")));
    }
    let a = sorted(arm_a);
    let b = sorted(arm_b);
    let mut max_violation: f64 = 0.0;
    for &t in a.iter().chain(b.iter()) {
        // Pr(B ≥ t) − Pr(A ≥ t) = F_A(t−) − F_B(t−)
        max_violation = max_violation.max(frac_below(&a, t) - frac_below(&b, t));
    }
    let eps = dkw_epsilon(a.len(), confidence) + dkw_epsilon(b.len(), confidence);
    Ok(DominanceReport {
        replicates: a.len(),
        p_values_zombie: arm_a.to_vec(),
        p_values_truth: arm_b.to_vec(),
        max_cdf_violation: max_violation,
        dkw_epsilon: eps,
        dominates: max_violation <= eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub replicates: usize,
    pub empirical_risk: f64,
    pub standard_error: f64,
}

impl RiskEstimate {
    /// Whether the risk stays within `alpha + sigmas · SE`.
    pub fn within(&self, alpha: f64, sigmas: f64) -> bool {
        self.empirical_risk <= alpha + sigmas * self.standard_error
    }
}

/// Fraction of audits of a wrongly reported outcome that stopped short of a
/// full hand count.
pub fn risk_estimate(pop: &PopulationSpec, records: &[ReplicateRecord]) -> Result<RiskEstimate, SimError> {
    if !pop.reported_outcome_wrong() {
        return Err(SimError::OutcomeNotWrong);
    }
    if records.is_empty() {
        return Err(SimError::NoReplicates);
    }
    let n = records.len() as f64;
    let stopped = records.iter().filter(|r| r.stopped_without_full_count).count() as f64;
    let p = stopped / n;
    Ok(RiskEstimate {
        replicates: records.len(),
        empirical_risk: p,
        standard_error: libm::sqrt(p * (1.0 - p) / n),
    })
}
