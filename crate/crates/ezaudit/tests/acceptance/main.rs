//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../common/mod.rs"]
mod common;
mod oracle;

use std::io::BufReader;
use std::panic;
use std::process::ExitCode;
use std::time::Instant;

use ezaudit::log::{replay, LoggedSession};
use ezaudit::manifest_csv::{parse_manifest, write_manifest};
use ezaudit::sim::{run_simulation, SimulationSpec};
use ezaudit_core::comparison::{ComparisonParams, ComparisonState, Overstatement, DEFAULT_GAMMA};
use ezaudit_core::contest::ContestSetup;
use ezaudit_core::manifest::{BallotLocation, BallotManifest};
use ezaudit_core::polling::{PollingBallot, PollingSetup, PollingState};
use ezaudit_core::sampling::{draw_batch, draw_next, AuditSeed, DrawSequence};
use ezaudit_core::scenario::{classify, BallotCounts};
use ezaudit_core::session::AuditMethod;
use ezaudit_core::simulator::{
    enumerate_fixed_n, replicate_seed, Arm, Experiment, ManifestErrorModel, PopulationBuilder, PopulationSpec,
    RunMode, SimRng, LOSER, WINNER,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use oracle::{Dd, Product};

type Outcome = Result<String, String>;

const METHODS: [AuditMethod; 2] = [AuditMethod::Comparison, AuditMethod::Polling];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

fn worked_numbers() -> Outcome {
    let margin = 5_000;
    let known = classify(BallotCounts::with_oracle(22_371, 23_000), margin).phantom_count();
    let bounded = classify(BallotCounts::with_upper(22_371, 24_000), margin).phantom_count();
    ensure(known == Some(629), || format!("N_O case gave {known:?}"))?;
    ensure(bounded == Some(1_629), || format!("N_U case gave {bounded:?}"))?;

    // 42 groups of 195 and 46 of 194 make 17,114; group 89 holds 200
    let mut groups: Vec<(String, u64)> = (1..=88u64)
        .map(|g| (format!("batch-{g:03}"), if g <= 42 { 195 } else { 194 }))
        .collect();
    groups.push(("batch-089".into(), 200));
    groups.extend((90..=115u64).map(|g| (format!("batch-{g:03}"), 190)));
    let manifest = BallotManifest::from_counts(groups).map_err(|e| e.to_string())?;
    ensure(manifest.cumulative()[87] == 17_114, || "fixture prefix is not 17,114".into())?;

    let mut csv = Vec::new();
    write_manifest(&manifest, &mut csv).map_err(|e| e.to_string())?;
    let parsed = parse_manifest(&csv[..]).map_err(|e| e.to_string())?;
    for m in [&manifest, &parsed] {
        let loc = m.locate(17_256, m.total_listed()).map_err(|e| e.to_string())?;
        let BallotLocation::Listed {
            group_ordinal,
            index_within_group,
            ..
        } = loc
        else {
            return Err(format!("draw 17,256 resolved to {loc:?}"));
        };
        ensure((group_ordinal, index_within_group) == (89, 142), || {
            format!("draw 17,256 -> ({group_ordinal}, {index_within_group})")
        })?;
    }
    Ok("phantoms 629 and 1,629; draw 17,256 -> (group 89, index 142), also after CSV round trip".into())
}

fn km_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b6d);
    let (mut cases, mut attempts, mut below_one) = (0, 0u64, 0);
    let (mut worst_raw, mut worst_p) = (0f64, 0f64);
    let mut longest = 0;
    while cases < 1_000 {
        attempts += 1;
        let gamma = rng.random_range(1.01..=2.0);
        let mu = log_uniform(&mut rng, 0.002, 0.8);
        let n = log_uniform(&mut rng, 1.0, 10_000.0).round() as usize;
        let error_rate = rng.random::<f64>().powi(2) * 0.2;
        let weights: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let nonzero = [-2i64, -1, 1, 2];
        let mut seq: Vec<Overstatement> = (0..n)
            .map(|_| {
                if rng.random::<f64>() >= error_rate {
                    return Overstatement::new(0).unwrap();
                }
                let mut x = rng.random::<f64>() * total;
                for (w, o) in weights.iter().zip(nonzero) {
                    if x < *w {
                        return Overstatement::new(o).unwrap();
                    }
                    x -= w;
                }
                Overstatement::ZOMBIE
            })
            .collect();
        let params = ComparisonParams::new(mu, gamma).map_err(|e| e.to_string())?;
        let rough: f64 = seq.iter().map(|&o| params.ln_factor(o)).sum();
        if rough.abs() > 680.0 {
            continue;
        }
        seq.shuffle(&mut rng);
        let mut st = ComparisonState::new();
        for &o in &seq {
            st = st.km_update(o, &params);
        }

        let two_gamma = Dd::new(2.0 * gamma);
        let step = Dd::new(1.0).sub(Dd::new(mu).div(two_gamma));
        let factors: Vec<Dd> = Overstatement::ALL
            .iter()
            .map(|o| step.div(Dd::new(1.0).sub(Dd::new(o.value() as f64).div(two_gamma))))
            .collect();
        let mut product = Product::one();
        for o in &seq {
            product.times(factors[(o.value() + 2) as usize]);
        }

        let raw = product.rel_err(st.log_p.exp());
        let p = if product.log2() < 0.0 {
            below_one += 1;
            product.rel_err(st.p_value())
        } else {
            rel(st.p_value(), 1.0)
        };
        worst_raw = worst_raw.max(raw);
        worst_p = worst_p.max(p);
        longest = longest.max(n);
        cases += 1;
    }
    let comparison = format!(
        "comparison: 1000 cases ({below_one} with P < 1, n up to {longest}, {attempts} drawn), max rel err {worst_p:.2e} on P, {worst_raw:.2e} unclamped"
    );
    ensure(worst_p <= 1e-12 && worst_raw <= 1e-12, || comparison.clone())?;
    let polling = polling_oracle()?;
    Ok(format!("{comparison}; {polling}"))
}

const NAMES: [&str; 4] = ["ana", "ben", "cyd", "dee"];

fn polling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x706f);
    let (mut cases, mut pairs_checked, mut below_one) = (0, 0, 0);
    let (mut worst_raw, mut worst_p) = (0f64, 0f64);
    while cases < 1_000 {
        let k = rng.random_range(2..=4);
        let top = rng.random_range(1_000..=1_000_000u64);
        let mut tallies = vec![top];
        for _ in 1..k {
            let t = (top as f64 * rng.random_range(0.3..0.995)).floor() as u64;
            tallies.push(t.clamp(1, top - 1));
        }
        let contest = ContestSetup::plurality("race", NAMES[..k].iter().copied().zip(tallies.iter().copied()))
            .map_err(|e| e.to_string())?;
        let setup = PollingSetup::new(contest).map_err(|e| e.to_string())?;

        let n = log_uniform(&mut rng, 1.0, 10_000.0).round() as usize;
        let no_vote = rng.random_range(0.0..0.1);
        let zombie = rng.random_range(0.0..0.03);
        let weights: Vec<f64> = tallies
            .iter()
            .map(|&t| t as f64 * rng.random_range(0.9..1.1))
            .collect();
        let total: f64 = weights.iter().sum();
        let ballots: Vec<PollingBallot> = (0..n)
            .map(|_| {
                let u = rng.random::<f64>();
                if u < zombie {
                    return PollingBallot::ZombieAllLosers;
                }
                if u < zombie + no_vote {
                    return PollingBallot::NoValidVote;
                }
                let mut x = rng.random::<f64>() * total;
                for (w, name) in weights.iter().zip(NAMES) {
                    if x < *w {
                        return PollingBallot::VoteFor(name.into());
                    }
                    x -= w;
                }
                PollingBallot::VoteFor(NAMES[k - 1].into())
            })
            .collect();

        let count = |c: &str| ballots.iter().filter(|b| matches!(b, PollingBallot::VoteFor(x) if x == c)).count();
        let zombies = ballots.iter().filter(|b| **b == PollingBallot::ZombieAllLosers).count();
        let rough_ok = setup.pairs().iter().all(|p| {
            let l = count(&p.winner) as f64 * p.ln_win() + (count(&p.loser) + zombies) as f64 * p.ln_lose();
            l.abs() <= 680.0
        });
        if !rough_ok {
            continue;
        }

        let mut st = PollingState::new(&setup);
        for b in &ballots {
            st = st.polling_update(b, &setup).map_err(|e| e.to_string())?;
        }
        let pair_p = st.pair_p_values();
        for (j, pair) in setup.pairs().iter().enumerate() {
            let (tw, tl) = (setup.contest().tally(&pair.winner) as f64, setup.contest().tally(&pair.loser) as f64);
            let sum = Dd::new(tw + tl);
            let win = Dd::new(2.0 * tw).div(sum);
            let lose = Dd::new(2.0 * tl).div(sum);
            let mut t = Product::one();
            for b in &ballots {
                match b {
                    PollingBallot::VoteFor(c) if *c == pair.winner => t.times(win),
                    PollingBallot::VoteFor(c) if *c == pair.loser => t.times(lose),
                    PollingBallot::ZombieAllLosers => t.times(lose),
                    _ => {}
                }
            }
            let p = t.recip();
            worst_raw = worst_raw.max(p.rel_err((-st.log_t[j]).exp()));
            let clamped = if p.log2() < 0.0 {
                below_one += 1;
                p.rel_err(pair_p[j])
            } else {
                rel(pair_p[j], 1.0)
            };
            worst_p = worst_p.max(clamped);
            pairs_checked += 1;
        }
        cases += 1;
    }
    let line = format!(
        "polling: 1000 cases, {pairs_checked} pairs ({below_one} with P < 1), max rel err {worst_p:.2e} on P, {worst_raw:.2e} unclamped"
    );
    ensure(worst_p <= 1e-12 && worst_raw <= 1e-12, || line.clone())?;
    Ok(line)
}

fn factor_ordering() -> Outcome {
    let zero = Overstatement::new(0).unwrap();
    let mut priors_checked = 0;
    for i in 1..=1000 {
        let mu = i as f64 / 1000.0;
        let params = ComparisonParams::new(mu, DEFAULT_GAMMA).map_err(|e| e.to_string())?;
        let f: Vec<f64> = Overstatement::ALL.iter().map(|&o| params.factor(o)).collect();
        ensure(f.windows(2).all(|w| w[0] < w[1]), || format!("μ = {mu}: factors {f:?} not increasing"))?;
        ensure(f.iter().all(|&x| x <= f[4]), || format!("μ = {mu}: zombie factor not maximal"))?;

        let mut priors = vec![ComparisonState::new()];
        let mut s = ComparisonState::new();
        for k in 0..60 {
            s = s.km_update(if k % 20 == 7 { Overstatement::ZOMBIE } else { zero }, &params);
            if k % 15 == 14 {
                priors.push(s);
            }
        }
        for prior in &priors {
            let after: Vec<f64> = Overstatement::ALL
                .iter()
                .map(|&o| prior.km_update(o, &params).p_value())
                .collect();
            let z = prior.km_update(Overstatement::ZOMBIE, &params).p_value();
            ensure(after.iter().all(|&p| p <= z), || format!("μ = {mu}: zombie P {z} below {after:?}"))?;
            priors_checked += 1;
        }
    }

    let mut grid = 0;
    let mut pair_checks = 0;
    for w in 501..=990u64 {
        let l = 1000 - w;
        let variants: Vec<Vec<(&'static str, u64)>> = vec![
            vec![("ana", w), ("ben", l)],
            vec![("ana", w), ("ben", l), ("cyd", (l / 2).max(1))],
        ];
        for tallies in variants {
            let names: Vec<&str> = tallies.iter().map(|(c, _)| *c).collect();
            let setup = PollingSetup::new(ContestSetup::plurality("race", tallies).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let mut outcomes: Vec<PollingBallot> = names.iter().map(|c| PollingBallot::VoteFor((*c).into())).collect();
            outcomes.push(PollingBallot::NoValidVote);
            outcomes.push(PollingBallot::VotesFor(names.iter().map(|c| (*c).into()).collect()));
            for a in 0..names.len() {
                for b in a + 1..names.len() {
                    outcomes.push(PollingBallot::VotesFor([names[a].into(), names[b].into()].into()));
                }
            }
            let mut priors = vec![PollingState::new(&setup)];
            let mut s = PollingState::new(&setup);
            for (k, b) in ["ana", "ana", "ben", "ana", "ana", "ana", "ben"].iter().enumerate() {
                s = s.polling_update(&PollingBallot::VoteFor((*b).into()), &setup).unwrap();
                if k == 3 || k == 6 {
                    priors.push(s.clone());
                }
            }
            for prior in &priors {
                let z = prior
                    .polling_update(&PollingBallot::ZombieAllLosers, &setup)
                    .unwrap()
                    .pair_p_values();
                for o in &outcomes {
                    let p = prior.polling_update(o, &setup).unwrap().pair_p_values();
                    for (j, (&pz, &po)) in z.iter().zip(&p).enumerate() {
                        ensure(po <= pz, || {
                            format!("s = {}: pair {j} outcome {o:?} gives {po} above zombie {pz}", w as f64 / 1000.0)
                        })?;
                        pair_checks += 1;
                    }
                }
            }
        }
        grid += 1;
    }
    Ok(format!(
        "comparison: 1000 μ values at γ = {DEFAULT_GAMMA}, factors strictly increasing, zombie P maximal from {priors_checked} prior states; polling: {grid} shares, zombie P weakly maximal in {pair_checks} pair comparisons"
    ))
}

/// The P-value after `draws` from first principles: walk the listing to
/// find the physical ballot, then multiply the textbook factors.
fn direct_p(pop: &PopulationSpec, manifest: &BallotManifest, n_upper: u64, draws: &[u64], method: AuditMethod) -> f64 {
    let c = pop.contest();
    let (tw, tl) = (c.tally(WINNER) as f64, c.tally(LOSER) as f64);
    let u = 2.0 * DEFAULT_GAMMA / ((tw - tl) / n_upper as f64);
    let mut p = 1.0f64;
    let mut t = 1.0f64;
    for &d in draws {
        let mut physical = None;
        let (mut listed_before, mut true_before) = (0, 0);
        for (g, listed) in manifest.groups().iter().enumerate() {
            let actual = pop.true_group_counts()[g].claimed_count;
            if d <= listed_before + listed.claimed_count {
                let idx = d - listed_before;
                if idx <= actual {
                    physical = Some((true_before + idx - 1) as usize);
                }
                break;
            }
            listed_before += listed.claimed_count;
            true_before += actual;
        }
        match method {
            AuditMethod::Comparison => {
                let o = physical.map_or(2, |b| pop.overstatement(b).value()) as f64;
                p *= (1.0 - 1.0 / u) / (1.0 - o / (2.0 * DEFAULT_GAMMA));
            }
            AuditMethod::Polling => match physical.map(|b| pop.polling_vote(b)) {
                Some(PollingBallot::VoteFor(w)) if w == WINNER => t *= 2.0 * tw / (tw + tl),
                Some(PollingBallot::VoteFor(_)) | None => t *= 2.0 * tl / (tw + tl),
                _ => {}
            },
        }
    }
    match method {
        AuditMethod::Comparison => p.min(1.0),
        AuditMethod::Polling => (1.0 / t).min(1.0),
    }
}

fn small_instance() -> Outcome {
    let mut b = PopulationBuilder::with_margin(6, 3, 0.34, 7);
    b.one_vote_overstatements = 1;
    let base = b.build().map_err(|e| e.to_string())?;
    let ids: Vec<String> = base.true_group_counts().iter().map(|g| g.group_id.clone()).collect();
    let listing = |counts: [u64; 3]| BallotManifest::from_counts(ids.iter().cloned().zip(counts)).unwrap();
    let manifests = [
        ("accurate", listing([2, 2, 2])),
        ("misfiled", listing([1, 3, 2])),
        ("omitted", listing([2, 1, 2])),
    ];
    let mut distributions = 0;
    let mut distinct_total = 0;
    for (label, manifest) in manifests {
        let pop = base.with_manifest(manifest.clone()).map_err(|e| e.to_string())?;
        for method in METHODS {
            let arms = [
                ("truth", Arm::truth(&pop, method, DEFAULT_GAMMA), pop.true_manifest()),
                ("zombie", Arm::zombie(&pop, 6, method, DEFAULT_GAMMA), manifest.clone()),
            ];
            for (arm_label, arm, listing) in arms {
                let arm = arm.map_err(|e| e.to_string())?;
                let engine = enumerate_fixed_n(&arm, &pop, 2);
                ensure(engine.len() == 36, || format!("{label}/{arm_label}: {} sequences", engine.len()))?;
                let mut pairs = Vec::new();
                for (seq, p) in &engine {
                    let q = direct_p(&pop, &listing, 6, seq, method);
                    ensure(rel(*p, q) <= 1e-12, || {
                        format!("{label}/{arm_label}/{method:?}: draws {seq:?} engine {p} direct {q}")
                    })?;
                    pairs.push((*p, q));
                }
                // same distribution: identical counts per distinct value
                let mut e: Vec<f64> = pairs.iter().map(|x| x.0).collect();
                let mut o: Vec<f64> = pairs.iter().map(|x| x.1).collect();
                e.sort_by(f64::total_cmp);
                o.sort_by(f64::total_cmp);
                let groups = |v: &[f64]| {
                    let mut out: Vec<(f64, u32)> = Vec::new();
                    for &x in v {
                        match out.last_mut() {
                            Some((y, n)) if rel(x, *y) <= 1e-12 => *n += 1,
                            _ => out.push((x, 1)),
                        }
                    }
                    out
                };
                let (ge, go) = (groups(&e), groups(&o));
                ensure(ge.len() == go.len(), || format!("{label}/{arm_label}/{method:?}: support sizes differ"))?;
                for ((ve, ne), (vo, no)) in ge.iter().zip(&go) {
                    ensure(ne == no && rel(*ve, *vo) <= 1e-12, || {
                        format!("{label}/{arm_label}/{method:?}: {ne}/36 at {ve} vs {no}/36 at {vo}")
                    })?;
                }
                distinct_total += ge.len();
                distributions += 1;
            }
        }
    }
    Ok(format!(
        "{distributions} distributions (3 manifests x 2 methods x 2 arms) over all 36 draw pairs, {distinct_total} support points, exact counts"
    ))
}

fn dominance_population() -> PopulationBuilder {
    let mut b = PopulationBuilder::with_margin(10_000, 100, 0.05, 11);
    b.two_vote_overstatements = 5;
    b.one_vote_overstatements = 10;
    b
}

fn spec(
    population: PopulationBuilder,
    reversed: bool,
    error_model: ManifestErrorModel,
    n_upper: Option<u64>,
    method: AuditMethod,
    mode: RunMode,
    seed: &str,
) -> SimulationSpec {
    SimulationSpec {
        population,
        reversed_outcome: reversed,
        error_model,
        error_seed: 5,
        n_upper,
        method,
        gamma: DEFAULT_GAMMA,
        mode,
        replicates: 10_000,
        confidence: 0.99,
        master_seed: seed.into(),
    }
}

fn stochastic_dominance() -> Outcome {
    let cases = [
        ("graves+hellmouths", ManifestErrorModel::misfiled(10, 5), None),
        ("omissions, N_U = N_O", ManifestErrorModel::omitted(200), None),
        ("omissions, N_U > N_O", ManifestErrorModel::omitted(200), Some(10_500)),
    ];
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (label, model, n_upper) in cases {
        for method in METHODS {
            let s = spec(
                dominance_population(),
                false,
                model,
                n_upper,
                method,
                RunMode::FixedN { draws: 200 },
                "dominance",
            );
            let run = run_simulation(&s).map_err(|e| e.to_string())?;
            let r = &run.report;
            let shape = match label {
                "graves+hellmouths" => r.n_manifest == r.n_true && r.graves == 10 && r.hellmouths == 10,
                _ => r.n_manifest < r.n_true && r.n_true <= r.n_upper,
            };
            ensure(shape, || format!("{label}: N_M {} N_O {} N_U {}", r.n_manifest, r.n_true, r.n_upper))?;
            let d = &r.dominance;
            let line = format!(
                "{label}/{method:?}: violation {:.4} vs ε {:.4}, mean P {:.4} vs {:.4}",
                d.max_cdf_violation, d.dkw_epsilon, r.zombie.mean_final_p, r.truth.mean_final_p
            );
            if !d.zombie_dominates_truth {
                failures.push(line.clone());
            }
            lines.push(line);
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("N_O = 10,000, margin 5%, n = 200, R = 10,000: {}", lines.join("; ")))
}

fn risk_limit() -> Outcome {
    let cases = [
        ("accurate", ManifestErrorModel::default(), None),
        ("graves+hellmouths", ManifestErrorModel::misfiled(10, 5), None),
        ("omissions", ManifestErrorModel::omitted(200), Some(10_500)),
    ];
    let mode = RunMode::Sequential { alpha: 0.10, cap: 2_500 };
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (label, model, n_upper) in cases {
        for method in METHODS {
            let population = PopulationBuilder::with_margin(10_000, 100, 0.05, 13);
            let s = spec(population, true, model, n_upper, method, mode, "risk");
            let run = run_simulation(&s).map_err(|e| e.to_string())?;
            ensure(run.report.reported_outcome_wrong, || format!("{label}: outcome not reversed"))?;
            let risk = run.report.risk.as_ref().ok_or("risk missing for a wrong outcome")?;
            for (arm, est) in [("truth", &risk.truth), ("zombie", &risk.zombie)] {
                let line = format!(
                    "{label}/{method:?}/{arm}: {:.4} (SE {:.4})",
                    est.empirical_risk, est.standard_error
                );
                if !est.within(0.10, 3.0) {
                    failures.push(line.clone());
                }
                lines.push(line);
            }
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("α = 0.10, cap 2,500, R = 10,000: {}", lines.join("; ")))
}

fn no_effect_when_accurate() -> Outcome {
    let mode = RunMode::Sequential { alpha: 0.10, cap: 2_500 };
    let mut b = PopulationBuilder::with_margin(10_000, 100, 0.05, 17);
    b.two_vote_overstatements = 8;
    b.one_vote_overstatements = 12;
    let pop = b.build().map_err(|e| e.to_string())?;
    let mut draws_compared = 0u64;
    for method in METHODS {
        let exp = Experiment::new(&pop, method, DEFAULT_GAMMA, pop.reported_manifest().total_listed(), mode)
            .map_err(|e| e.to_string())?;
        for i in 0..2_000 {
            let seed = replicate_seed(b"no effect", i);
            let trace = |arm: &Arm| {
                let mut t: Vec<(u64, u64)> = Vec::new();
                let rec = arm.run_traced(&pop, &mut SimRng::from_seed(seed), mode, |d, p| t.push((d, p.to_bits())));
                (t, rec)
            };
            let (tt, rt) = trace(&exp.truth);
            let (tz, rz) = trace(&exp.zombie);
            ensure(tt == tz, || format!("{method:?} replicate {i}: trajectories differ"))?;
            ensure(rt.final_p.to_bits() == rz.final_p.to_bits() && rt.draws_used == rz.draws_used, || {
                format!("{method:?} replicate {i}: {rt:?} vs {rz:?}")
            })?;
            ensure(
                rt.stopped_without_full_count == rz.stopped_without_full_count && rz.zombies == 0,
                || format!("{method:?} replicate {i}: stopping differs or zombies appeared"),
            )?;
            draws_compared += tt.len() as u64;
        }
    }
    Ok(format!(
        "2,000 replicates per method, {draws_compared} draws with bit-identical P and identical stopping times"
    ))
}

/// Perturb the first number in `v`, or the first string if there is none.
fn nudge(v: &mut Value) -> bool {
    fn number(v: &mut Value) -> bool {
        match v {
            Value::Number(n) => {
                *v = match n.as_u64() {
                    Some(u) => (u + 1).into(),
                    None => (n.as_f64().unwrap() * (1.0 + 1e-9) + 1e-300).into(),
                };
                true
            }
            Value::Array(a) => a.iter_mut().any(number),
            Value::Object(o) => o.values_mut().any(number),
            _ => false,
        }
    }
    fn string(v: &mut Value) -> bool {
        match v {
            Value::String(s) => {
                s.push('x');
                true
            }
            Value::Array(a) => a.iter_mut().any(string),
            Value::Object(o) => o.values_mut().any(string),
            _ => false,
        }
    }
    number(v) || string(v)
}

fn replay_check() -> Outcome {
    let mut mutations = 0;
    for method in METHODS {
        let mut logged =
            LoggedSession::start_with_clock(common::config(method, 104), common::fixed_clock).map_err(|e| e.to_string())?;
        common::drive(&mut logged, 400).ok_or("session did not finish")?;
        let text = logged.to_jsonl();
        let back = replay(BufReader::new(text.as_bytes())).map_err(|e| e.to_string())?;
        let (a, b) = (logged.session(), back.session());
        ensure(rel(a.p_value(), b.p_value()) <= 1e-12, || "final P differs".into())?;
        ensure(a.draws() == b.draws(), || "draws differ".into())?;
        ensure(a.trajectory().len() == b.trajectory().len(), || "trajectory lengths differ".into())?;
        for (x, y) in a.trajectory().iter().zip(b.trajectory()) {
            ensure(x.counter == y.counter && x.kind == y.kind && rel(x.p_value, y.p_value) <= 1e-12, || {
                format!("trajectory point {} differs", x.counter)
            })?;
        }
        ensure(a.status() == b.status() && logged.state_digest() == back.state_digest(), || {
            "final state differs".into()
        })?;

        let lines: Vec<&str> = text.lines().collect();
        let edits: [(&str, fn(&mut Value) -> bool); 6] = [
            ("timestamp", |v| {
                v["timestamp"] = "2001-01-01T00:00:00.000Z".into();
                true
            }),
            ("payload value", |v| nudge(&mut v["payload"])),
            ("payload field", |v| {
                v["payload"]["note"] = "edited".into();
                true
            }),
            ("seq", |v| {
                v["seq"] = (v["seq"].as_u64().unwrap() + 1).into();
                true
            }),
            ("digest", |v| {
                let d = v["digest"].as_str().unwrap().to_string();
                v["digest"] = format!("{}{}", if d.starts_with('0') { '1' } else { '0' }, &d[1..]).into();
                true
            }),
            ("prev", |v| {
                let d = v["prev"].as_str().unwrap().to_string();
                v["prev"] = format!("{}{}", if d.starts_with('f') { 'e' } else { 'f' }, &d[1..]).into();
                true
            }),
        ];
        // every record is mutated once, cycling through the kinds of edit
        for i in 0..lines.len() {
            let (what, edit) = &edits[i % edits.len()];
            let mut v: Value = serde_json::from_str(lines[i]).unwrap();
            if !edit(&mut v) {
                return Err(format!("{method:?}: nothing to edit in record {i}"));
            }
            let mut copy: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
            copy[i] = serde_json::to_string(&v).unwrap();
            let bad = copy.join("\n") + "\n";
            ensure(replay(BufReader::new(bad.as_bytes())).is_err(), || {
                format!("{method:?}: {what} edit on record {i} went unnoticed")
            })?;
            mutations += 1;
        }
    }
    Ok(format!(
        "both methods replay to the same state, draws and trajectory; {mutations} single-record mutations (one per record, 6 kinds) all rejected"
    ))
}

fn sampler() -> Outcome {
    let seed = AuditSeed::new(*b"uniformity check 2024-11-05", "acceptance").map_err(|e| e.to_string())?;
    let mut counts = [0u64; 10];
    for i in 0..100_000 {
        let d = draw_next(&seed, i, 10).map_err(|e| e.to_string())?;
        counts[(d - 1) as usize] += 1;
    }
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - 10_000.0).powi(2) / 10_000.0).sum();
    // upper 0.001 point of chi-square with 9 degrees of freedom
    ensure(chi2 < 27.877, || format!("chi-square {chi2:.3} with counts {counts:?}"))?;

    for n_upper in [10, 24_000, (1u64 << 63) + 12_345] {
        let full = draw_batch(&seed, 0, 3_000, n_upper).map_err(|e| e.to_string())?;
        let prefix = draw_batch(&seed, 0, 1_000, n_upper).map_err(|e| e.to_string())?;
        let offset = draw_batch(&seed, 1_234, 1_500, n_upper).map_err(|e| e.to_string())?;
        ensure(prefix[..] == full[..1_000], || format!("N_U {n_upper}: prefix mismatch"))?;
        ensure(offset[..] == full[1_234..2_734], || format!("N_U {n_upper}: offset mismatch"))?;
        let mut seq = DrawSequence::new(n_upper).map_err(|e| e.to_string())?;
        let streamed: Vec<u64> = (0..3_000).map(|_| seq.advance(&seed)).collect();
        ensure(streamed == full, || format!("N_U {n_upper}: streaming differs from batch"))?;
    }
    Ok(format!("100,000 draws over N_U = 10, chi-square {chi2:.3} < 27.877; batch prefix, offset and streaming agree exactly"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("worked numbers", worked_numbers),
        ("P-value oracle equivalence", km_oracle),
        ("worst-case factor ordering", factor_ordering),
        ("small-instance exactness", small_instance),
        ("stochastic dominance", stochastic_dominance),
        ("risk limit", risk_limit),
        ("no effect when accurate", no_effect_when_accurate),
        ("determinism and replay", replay_check),
        ("sampler uniformity", sampler),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
