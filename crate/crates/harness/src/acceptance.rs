//! The acceptance suite, shared by `trap verify` and the `acceptance` test
//! target. A [`Fixture`] can tamper with inputs so negative controls can
//! show each criterion is able to fail.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use trap_core::analysis::check_dominance_empirical;
use trap_core::net::PolicyKind;
use trap_core::params::{
    compute_t0, dominance_check, feasible, min_deposit_coeff, parse_rational, worst_case_deposit_coeff, DepositBound,
    DepositMode, FinancialParams, ProtocolParams, Rational,
};
use trap_core::rb::RbThresholds;
use trap_core::rb_explore::{equivocation_scenarios_n4, explore_exhaustive, explore_random, random_equivocation_scenario};
use trap_core::sim::{run, Mutation, SimConfig};
use trap_core::strategy::{classify_run, CoalitionPlan, RunClass, StrategyKind};

use crate::golden;
use crate::params_cmd::params_report;
use crate::report::pool;

#[derive(Debug, Clone)]
pub struct Fixture {
    /// Replaces the reward in the dominance checks.
    pub reward: Option<Rational>,
    /// Subtracted from the echo and delivery quorums in the broadcast checks.
    pub rb_quorum_shift: usize,
    pub golden_mutation: Option<Mutation>,
    pub golden_dir: PathBuf,
}

impl Default for Fixture {
    fn default() -> Self {
        Self { reward: None, rb_quorum_shift: 0, golden_mutation: None, golden_dir: golden::default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: Option<f64>,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let limit = self.limit_seconds.map_or(String::new(), |l| format!(" < {l}s"));
        write!(
            f,
            "{} [{:>2}] {:<22} {:>7.2}s{}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            limit,
            self.detail
        )
    }
}

const GAIN: i128 = 60;
const SEEDS: u64 = 200;

fn cor(n: u32, k: u32, t: u32) -> ProtocolParams {
    ProtocolParams::corollary(n, k, t, Rational::from_integer(GAIN), Rational::from_integer(1)).expect("n >= 1")
}

fn timed(id: u8, name: &'static str, limit: Option<f64>, f: impl FnOnce() -> (bool, String)) -> CriterionResult {
    let start = Instant::now();
    let (ok, detail) = f();
    let seconds = start.elapsed().as_secs_f64();
    let in_time = limit.is_none_or(|l| seconds < l);
    let detail = if in_time { detail } else { format!("{detail}; over time limit") };
    CriterionResult { id, name, passed: ok && in_time, detail, seconds, limit_seconds: limit }
}

fn criterion_params() -> CriterionResult {
    timed(1, "params-table", Some(1.0), || {
        let g = Rational::from_integer(GAIN);
        let t_max = |d: &str| params_report(100, None, g, Some(parse_rational(d).expect("literal"))).ok().and_then(|r| r.max_tolerated_byzantine);
        let (a, b) = (t_max("0.01"), t_max("1/300"));
        (a == Some(30) && b == Some(24), format!("n=100: d=0.01 -> t={a:?}, d=1/300 -> t={b:?}"))
    })
}

fn criterion_worst_case() -> CriterionResult {
    timed(2, "worst-case-deposit", Some(5.0), || {
        let mut checked = 0;
        let mut bad = Vec::new();
        for n in 7..=60 {
            let t0 = compute_t0(n).expect("n >= 1");
            if !feasible(n, 1, t0) {
                continue;
            }
            checked += 1;
            let want = Rational::new(1, n.div_ceil(3) as i128 - 1);
            let got = worst_case_deposit_coeff(n);
            if got != Some(want) {
                bad.push(format!("n={n}: {got:?}"));
            }
        }
        (bad.is_empty() && checked > 0, format!("{checked} sizes checked; mismatches {bad:?}"))
    })
}

/// Every feasible `(n, k, t)` with `n <= 13` whose coalition can split the
/// correct players.
pub fn small_configs() -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for n in 4..=13 {
        let t0 = compute_t0(n).expect("n >= 1");
        for k in 1..n {
            for t in 0..n {
                if feasible(n, k, t) && k + t > t0 {
                    out.push((n, k, t));
                }
            }
        }
    }
    out
}

#[derive(Debug, Default)]
struct SweepStats {
    runs: usize,
    disagreements: Vec<String>,
    resolved: usize,
    bad_resolution: Vec<String>,
    unterminated: Vec<String>,
    short_slash: Vec<String>,
    bad_reward: Vec<String>,
}

fn agreement_sweep() -> SweepStats {
    let jobs: Vec<(u32, u32, u32, PolicyKind, u64)> = small_configs()
        .into_iter()
        .flat_map(|(n, k, t)| PolicyKind::ALL.into_iter().flat_map(move |p| (0..SEEDS).map(move |s| (n, k, t, p, s))))
        .collect();
    let per_run: Vec<SweepStats> = pool().install(|| {
        jobs.par_iter()
            .map(|&(n, k, t, policy, seed)| {
                let p = cor(n, k, t);
                let fin = FinancialParams::derive(&p, DepositMode::Corollary);
                let plan = CoalitionPlan::best_effort(&p, p.effective_m(), seed);
                let r = run(&SimConfig::new(n, k, t, Some(plan.clone()), policy, seed));
                let out = classify_run(n, Some(&plan), &r.decisions);
                let tag = format!("({n},{k},{t}) {}#{seed}", policy.name());
                let mut s = SweepStats { runs: 1, ..Default::default() };
                if out.disagreement() {
                    s.disagreements.push(tag.clone());
                }
                if !r.terminated {
                    s.unterminated.push(tag.clone());
                }
                if let Some(w) = out.winner {
                    s.resolved = 1;
                    let winners: std::collections::BTreeSet<_> = out
                        .decisions
                        .iter()
                        .flatten()
                        .filter_map(|d| match d {
                            trap_core::bftcr::BftcrDecision::Resolved { winner, .. } => Some(*winner),
                            _ => None,
                        })
                        .collect();
                    if winners.len() != 1 || !plan.is_member(w) {
                        s.bad_resolution.push(format!("{tag} winners {winners:?}"));
                    }
                    if out.slashed.len() < p.t0 as usize {
                        s.bad_resolution.push(format!("{tag} slashed {}", out.slashed.len()));
                    }
                    let slashed_total = fin.deposit * Rational::from_integer(out.slashed.len() as i128);
                    if slashed_total < fin.reward {
                        s.short_slash.push(format!("{tag} slashed {slashed_total} < R {}", fin.reward));
                    }
                    if fin.reward != fin.deposit * Rational::from_integer(p.t0 as i128) {
                        s.bad_reward.push(tag);
                    }
                }
                s
            })
            .collect()
    });
    per_run.into_iter().fold(SweepStats::default(), |mut acc, s| {
        acc.runs += s.runs;
        acc.resolved += s.resolved;
        acc.disagreements.extend(s.disagreements);
        acc.bad_resolution.extend(s.bad_resolution);
        acc.unterminated.extend(s.unterminated);
        acc.short_slash.extend(s.short_slash);
        acc.bad_reward.extend(s.bad_reward);
        acc
    })
}

fn first(v: &[String]) -> String {
    v.iter().take(3).cloned().collect::<Vec<_>>().join(", ")
}

fn criteria_agreement_and_reward() -> (CriterionResult, CriterionResult) {
    let mut stats = SweepStats::default();
    let c3 = timed(3, "baiting-agreement", Some(120.0), || {
        stats = agreement_sweep();
        let s = &stats;
        (
            s.disagreements.is_empty() && s.bad_resolution.is_empty(),
            format!(
                "{} configs, {} runs, {} resolved, {} disagreements {}, {} bad resolutions {}, {} non-terminating [{}]",
                small_configs().len(),
                s.runs,
                s.resolved,
                s.disagreements.len(),
                first(&s.disagreements),
                s.bad_resolution.len(),
                first(&s.bad_resolution),
                s.unterminated.len(),
                s.unterminated.join(", ")
            ),
        )
    });
    let c5 = timed(5, "lossfree-reward", None, || {
        let s = &stats;
        (
            s.resolved > 0 && s.short_slash.is_empty() && s.bad_reward.is_empty(),
            format!("{} resolved runs; slashed < R in {}; R != t0 L in {} {}", s.resolved, s.short_slash.len(), s.bad_reward.len(), first(&s.short_slash)),
        )
    });
    (c3, c5)
}

fn criterion_tightness() -> CriterionResult {
    timed(4, "tightness", Some(120.0), || {
        let configs: Vec<(u32, u32, u32)> = small_configs().into_iter().filter(|&(n, k, t)| cor(n, k, t).effective_m() >= 1).collect();
        let found: Vec<Option<u64>> = pool().install(|| {
            configs
                .par_iter()
                .map(|&(n, k, t)| {
                    let p = cor(n, k, t);
                    (0..SEEDS).find(|&seed| {
                        let plan = CoalitionPlan::best_effort(&p, p.effective_m() - 1, seed);
                        let r = run(&SimConfig::new(n, k, t, Some(plan.clone()), PolicyKind::PartitionAdversarial, seed));
                        classify_run(n, Some(&plan), &r.decisions).classes.contains(&RunClass::Disagreement)
                    })
                })
                .collect()
        });
        let missing: Vec<String> = configs.iter().zip(&found).filter(|(_, f)| f.is_none()).map(|(c, _)| format!("{c:?}")).collect();
        let worst = found.iter().flatten().max().copied().unwrap_or(0);
        (missing.is_empty() && !configs.is_empty(), format!("{} configs with m >= 1; latest first split at seed {worst}; none found for {missing:?}", configs.len()))
    })
}

fn criterion_late_bait() -> CriterionResult {
    timed(6, "late-bait-exclusion", None, || {
        let mut detail = Vec::new();
        let mut ok = true;
        for (n, k, t) in [(10, 2, 2), (13, 3, 2)] {
            let p = cor(n, k, t);
            let jobs: Vec<(PolicyKind, u64)> = PolicyKind::ALL.into_iter().flat_map(|pol| (0..1000).map(move |s| (pol, s))).collect();
            let valid: usize = pool().install(|| {
                jobs.par_iter()
                    .filter(|&&(policy, seed)| {
                        let m = p.effective_m() as usize;
                        let mut rational = vec![StrategyKind::Disagree; k as usize];
                        rational[..m].fill(StrategyKind::Bait);
                        rational[m] = StrategyKind::LateBait;
                        let byz = vec![StrategyKind::Disagree; t as usize];
                        let plan = CoalitionPlan::from_profile(n, p.t0, &rational, &byz, seed);
                        let late = plan.members_with(StrategyKind::LateBait)[0];
                        let r = run(&SimConfig::new(n, k, t, Some(plan), policy, seed));
                        r.valid_candidates.contains(&late)
                    })
                    .count()
            });
            ok &= valid == 0;
            detail.push(format!("({n},{k},{t}): {valid} of {} runs", jobs.len()));
        }
        (ok, format!("late baiter valid in {}", detail.join(", ")))
    })
}

fn criterion_uniformity() -> CriterionResult {
    timed(7, "winner-uniformity", None, || {
        let mut ok = true;
        let mut detail = Vec::new();
        for (n, k, t, seeds, lo, hi) in [(10u32, 2u32, 2u32, 2000u64, 0.45, 0.55), (13, 3, 2, 3000, 0.283, 0.383)] {
            let p = cor(n, k, t);
            let rational = vec![StrategyKind::Bait; k as usize];
            let byz = vec![StrategyKind::Disagree; t as usize];
            let slots: Vec<Option<usize>> = pool().install(|| {
                (0..seeds)
                    .into_par_iter()
                    .map(|seed| {
                        let plan = CoalitionPlan::from_profile(n, p.t0, &rational, &byz, seed);
                        let r = run(&SimConfig::new(n, k, t, Some(plan.clone()), PolicyKind::PartitionAdversarial, seed));
                        let w = classify_run(n, Some(&plan), &r.decisions).winner?;
                        CoalitionPlan::shuffled_ids(n, seed).iter().position(|&id| id == w)
                    })
                    .collect()
            });
            let mut wins: BTreeMap<usize, u64> = BTreeMap::new();
            for s in slots.iter().flatten() {
                *wins.entry(*s).or_insert(0) += 1;
            }
            let fractions: Vec<f64> = (0..k as usize).map(|i| *wins.get(&i).unwrap_or(&0) as f64 / seeds as f64).collect();
            ok &= fractions.iter().all(|&f| (lo..=hi).contains(&f)) && wins.keys().all(|&s| s < k as usize);
            let shown: Vec<String> = fractions.iter().map(|f| format!("{f:.3}")).collect();
            detail.push(format!("m={k} over {seeds}: [{}] in [{lo}, {hi}]", shown.join(", ")));
        }
        (ok, detail.join("; "))
    })
}

fn criterion_immunity() -> CriterionResult {
    timed(8, "t0-immunity", None, || {
        let mut bad = Vec::new();
        let mut runs = 0;
        for n in [4u32, 7, 10] {
            let t0 = compute_t0(n).expect("n >= 1");
            for kind in [StrategyKind::Silent, StrategyKind::Disagree] {
                for policy in PolicyKind::ALL {
                    for seed in 0..SEEDS {
                        let plan = CoalitionPlan::from_profile(n, t0, &[], &vec![kind; t0 as usize], seed);
                        let r = run(&SimConfig::new(n, 0, t0, Some(plan.clone()), policy, seed));
                        let out = classify_run(n, Some(&plan), &r.decisions);
                        runs += 1;
                        if !r.terminated || !out.identical || out.disagreement() {
                            bad.push(format!("n={n} {} {}#{seed}", kind.name(), policy.name()));
                        }
                    }
                }
            }
        }
        (bad.is_empty(), format!("{runs} runs; {} with correct players not deciding one value {}", bad.len(), first(&bad)))
    })
}

fn criterion_broadcast(shift: usize) -> CriterionResult {
    timed(9, "reliable-broadcast", None, || {
        let weaken = |n: u32| {
            let th = RbThresholds::standard(n);
            (shift > 0).then(|| RbThresholds { echo_to_ready: th.echo_to_ready - shift, deliver: th.deliver - shift, ..th })
        };
        let mut states = 0;
        let mut bad = Vec::new();
        let scenarios = equivocation_scenarios_n4();
        for mut sc in scenarios.clone() {
            sc.thresholds = weaken(sc.n);
            let r = explore_exhaustive(&sc);
            states += r.explored;
            bad.extend(r.violations.into_iter().map(|v| format!("n=4: {v}")));
        }
        let random = 2000;
        for seed in 0..random {
            let mut sc = random_equivocation_scenario(7, seed);
            sc.thresholds = weaken(7);
            bad.extend(explore_random(&sc, seed).into_iter().map(|v| format!("n=7 seed {seed}: {v}")));
        }
        (
            bad.is_empty(),
            format!("n=4: {} scripts, {states} states; n=7: {random} random schedules; {} violations {}", scenarios.len(), bad.len(), first(&bad)),
        )
    })
}

fn criterion_dominance(reward: Option<Rational>) -> CriterionResult {
    timed(10, "dominance", None, || {
        let fin_of = |p: &ProtocolParams| {
            let mut f = FinancialParams::derive(p, DepositMode::Corollary);
            if let Some(r) = reward {
                f.reward = r;
            }
            f
        };
        let mut checked = 0;
        let mut failing = Vec::new();
        for n in 4..=30 {
            for k in 1..n {
                for t in 0..n {
                    if !feasible(n, k, t) {
                        continue;
                    }
                    let p = cor(n, k, t);
                    if p.effective_m() == 0 {
                        continue;
                    }
                    checked += 1;
                    if !dominance_check(&p, &fin_of(&p)) {
                        failing.push(format!("({n},{k},{t})"));
                    }
                }
            }
        }
        let p = cor(10, 2, 2);
        let rep = check_dominance_empirical(&p, &fin_of(&p), 0..500);
        let empirical = rep.bait_mean > rep.gain_share;
        let DepositBound::Above(min) = min_deposit_coeff(10, 2, 2).expect("feasible") else {
            return (false, "no deposit bound at (10,2,2)".into());
        };
        let mut low = p.clone();
        low.deposit_coeff = min / Rational::from_integer(2);
        let reversed = !dominance_check(&low, &FinancialParams::derive(&low, DepositMode::Plain));
        (
            failing.is_empty() && checked > 0 && empirical && reversed,
            format!(
                "analytic holds in {}/{checked} {}; empirical bait mean {} vs G/k {}; d = min/2 reverses: {reversed}",
                checked - failing.len(),
                first(&failing),
                rep.bait_mean,
                rep.gain_share
            ),
        )
    })
}

fn criterion_golden(fx: &Fixture) -> CriterionResult {
    timed(11, "golden-trace", None, || match golden::check(&fx.golden_dir, "fig2", fx.golden_mutation) {
        Ok(c) => {
            let mut d = format!(
                "milestones {}, trace {}, ordered {}, terminated {}",
                if c.milestones_match { "match" } else { "differ" },
                if c.trace_match { "matches" } else { "differs" },
                c.ordered,
                c.terminated
            );
            if !c.diff.is_empty() {
                d.push('\n');
                d.push_str(&c.diff.lines().take(20).collect::<Vec<_>>().join("\n"));
            }
            (c.passed(), d)
        }
        Err(e) => (false, format!("{e:#}")),
    })
}

/// Runs the criteria selected by `only` (all when empty), in order, calling
/// `each` as every result comes in.
pub fn run_all(fx: &Fixture, only: &[u8], mut each: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let want = |id: u8| only.is_empty() || only.contains(&id);
    let mut out = Vec::new();
    let mut push = |r: CriterionResult| {
        each(&r);
        out.push(r);
    };
    if want(1) {
        push(criterion_params());
    }
    if want(2) {
        push(criterion_worst_case());
    }
    if want(3) || want(5) {
        let (c3, c5) = criteria_agreement_and_reward();
        if want(3) {
            push(c3);
        }
        if want(4) {
            push(criterion_tightness());
        }
        if want(5) {
            push(c5);
        }
    } else if want(4) {
        push(criterion_tightness());
    }
    if want(6) {
        push(criterion_late_bait());
    }
    if want(7) {
        push(criterion_uniformity());
    }
    if want(8) {
        push(criterion_immunity());
    }
    if want(9) {
        push(criterion_broadcast(fx.rb_quorum_shift));
    }
    if want(10) {
        push(criterion_dominance(fx.reward));
    }
    if want(11) {
        push(criterion_golden(fx));
    }
    out
}
