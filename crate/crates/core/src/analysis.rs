//! Seeded experiments over strategy profiles: matched-seed dominance batches
//! and a brute-force robustness sweep over a finite strategy library.

use std::collections::BTreeMap;
use std::ops::Range;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::net::PolicyKind;
use crate::params::{dominance_check, FinancialParams, ProtocolParams, Rational};
use crate::sim::{run, SimConfig};
use crate::strategy::{classify_run, compute_utilities, CoalitionPlan, PayoffConfig, RunClass, StrategyKind};
use crate::PlayerId;

/// Utilities of one profile in one seeded run, plus the per-member view.
#[derive(Debug, Clone)]
pub struct ProfileRun {
    pub plan: CoalitionPlan,
    /// Member ids in profile order: rational slots first, then Byzantine.
    pub slots: Vec<PlayerId>,
    pub classes: Vec<RunClass>,
    pub utilities: Vec<Rational>,
}

pub fn run_profile(
    params: &ProtocolParams,
    fin: &FinancialParams,
    rational: &[StrategyKind],
    byzantine: &[StrategyKind],
    policy: PolicyKind,
    seed: u64,
) -> ProfileRun {
    let plan = CoalitionPlan::from_profile(params.n, params.t0, rational, byzantine, seed);
    let mut slots = CoalitionPlan::shuffled_ids(params.n, seed);
    slots.truncate(rational.len() + byzantine.len());
    let result = run(&SimConfig::new(params.n, params.k, params.t, Some(plan.clone()), policy, seed));
    let outcome = classify_run(params.n, Some(&plan), &result.decisions);
    let utilities = compute_utilities(&outcome, Some(&plan), fin, params, &PayoffConfig::default()).utilities;
    ProfileRun { plan, slots, classes: outcome.classes, utilities }
}

fn mean(sum: Rational, count: usize) -> Rational {
    if count == 0 {
        Rational::zero()
    } else {
        sum / Rational::from_integer(count as i128)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub baiters: u32,
    pub runs: usize,
    /// Mean utility of rational members, grouped by the strategy they played.
    pub rational_mean: BTreeMap<StrategyKind, Rational>,
    pub resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub m: u32,
    pub gain_share: Rational,
    pub analytic: bool,
    pub all_collude: BatchSummary,
    pub with_m: BatchSummary,
    pub with_m_plus_one: Option<BatchSummary>,
    /// Mean realized by baiters with `m` baiters.
    pub bait_mean: Rational,
    /// Mean realized by colluders when nobody baits.
    pub disagree_mean: Rational,
    pub bait_beats_disagree: bool,
    /// Baiting beats disagreeing whenever the analytic check says it should.
    pub holds: bool,
}

fn batch(params: &ProtocolParams, fin: &FinancialParams, baiters: u32, seeds: &Range<u64>) -> BatchSummary {
    let mut sums: BTreeMap<StrategyKind, (Rational, usize)> = BTreeMap::new();
    let mut runs = 0;
    let mut resolved = 0;
    for seed in seeds.clone() {
        let plan = CoalitionPlan::best_effort(params, baiters, seed);
        let result = run(&SimConfig::new(params.n, params.k, params.t, Some(plan.clone()), PolicyKind::PartitionAdversarial, seed));
        let outcome = classify_run(params.n, Some(&plan), &result.decisions);
        let report = compute_utilities(&outcome, Some(&plan), fin, params, &PayoffConfig::default());
        runs += 1;
        if outcome.winner.is_some() {
            resolved += 1;
        }
        for &p in &plan.rational {
            let e = sums.entry(plan.strategy_of(p)).or_insert((Rational::zero(), 0));
            e.0 += report.utilities[p as usize];
            e.1 += 1;
        }
    }
    let rational_mean = sums.into_iter().map(|(s, (sum, c))| (s, mean(sum, c))).collect();
    BatchSummary { baiters, runs, rational_mean, resolved }
}

/// Runs matched seed batches under the partition schedule, where both
/// certificates always form: nobody baits, `m` bait, and `m + 1` bait.
pub fn check_dominance_empirical(params: &ProtocolParams, fin: &FinancialParams, seeds: Range<u64>) -> DominanceReport {
    let m = params.effective_m().max(1).min(params.k);
    let all_collude = batch(params, fin, 0, &seeds);
    let with_m = batch(params, fin, m, &seeds);
    let with_m_plus_one = (m < params.k).then(|| batch(params, fin, m + 1, &seeds));
    let bait_mean = with_m.rational_mean.get(&StrategyKind::Bait).copied().unwrap_or_default();
    let disagree_mean = all_collude.rational_mean.get(&StrategyKind::Disagree).copied().unwrap_or_default();
    let analytic = dominance_check(params, fin);
    let bait_beats_disagree = bait_mean > disagree_mean;
    DominanceReport {
        m,
        gain_share: params.gain_share(),
        analytic,
        all_collude,
        with_m,
        with_m_plus_one,
        bait_mean,
        disagree_mean,
        bait_beats_disagree,
        holds: !analytic || bait_beats_disagree,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyLibrary {
    pub rational: Vec<StrategyKind>,
    pub byzantine: Vec<StrategyKind>,
    pub policies: Vec<PolicyKind>,
}

impl Default for StrategyLibrary {
    fn default() -> Self {
        Self {
            rational: StrategyKind::ALL.to_vec(),
            byzantine: StrategyKind::BYZANTINE.to_vec(),
            policies: PolicyKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rational: Vec<StrategyKind>,
    pub byzantine: Vec<StrategyKind>,
    /// Index into `rational` of the member that gains.
    pub member: usize,
    pub utility: Rational,
    /// Best of the member's protocol-following responses, Correct or Bait.
    pub protocol_utility: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub profiles: usize,
    pub runs: usize,
    pub epsilon: Rational,
    pub violations: Vec<Violation>,
    /// With no rational members: profiles in which some player outside the
    /// coalition ended a run with non-positive utility.
    pub immunity_failures: Vec<Vec<StrategyKind>>,
    pub robust: bool,
    pub immune: bool,
}

fn assignments(kinds: &[StrategyKind], max_len: u32) -> Vec<Vec<StrategyKind>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|prefix: &Vec<StrategyKind>| {
                kinds.iter().map(move |&s| {
                    let mut v = prefix.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Enumerates every library profile with at most `k` rational and `t`
/// Byzantine members over every policy and seed, then checks that no
/// rational member does better than its best protocol response (Correct, or
/// Bait) by more than `epsilon`, holding everyone else fixed. Utilities are
/// means over policies and seeds.
pub fn check_robustness(
    params: &ProtocolParams,
    fin: &FinancialParams,
    library: &StrategyLibrary,
    epsilon: Rational,
    seeds: Range<u64>,
) -> RobustnessReport {
    let rationals = assignments(&library.rational, params.k);
    let byzantines = assignments(&library.byzantine, params.t);
    let mut table: BTreeMap<(Vec<StrategyKind>, Vec<StrategyKind>), Vec<Rational>> = BTreeMap::new();
    let mut immunity_failures = Vec::new();
    let mut runs = 0;
    for byz in &byzantines {
        for rat in &rationals {
            let mut sums = vec![Rational::zero(); rat.len()];
            let mut count = 0;
            let mut outsider_hurt = false;
            for &policy in &library.policies {
                for seed in seeds.clone() {
                    let r = run_profile(params, fin, rat, byz, policy, seed);
                    for (i, &p) in r.slots[..rat.len()].iter().enumerate() {
                        sums[i] += r.utilities[p as usize];
                    }
                    if rat.is_empty() {
                        outsider_hurt |= r.plan.outsiders().iter().any(|&p| r.utilities[p as usize] <= Rational::zero());
                    }
                    count += 1;
                    runs += 1;
                }
            }
            if outsider_hurt {
                immunity_failures.push(byz.clone());
            }
            table.insert((rat.clone(), byz.clone()), sums.into_iter().map(|s| mean(s, count)).collect());
        }
    }
    let mut violations = Vec::new();
    for ((rat, byz), utils) in &table {
        for (i, &u) in utils.iter().enumerate() {
            let with = |s: StrategyKind| {
                let mut alt = rat.clone();
                alt[i] = s;
                table.get(&(alt, byz.clone())).map(|v| v[i])
            };
            let Some(protocol_utility) = [StrategyKind::Correct, StrategyKind::Bait].into_iter().filter_map(with).max() else {
                continue;
            };
            if u > protocol_utility + epsilon {
                violations.push(Violation { rational: rat.clone(), byzantine: byz.clone(), member: i, utility: u, protocol_utility });
            }
        }
    }
    RobustnessReport {
        profiles: table.len(),
        runs,
        epsilon,
        robust: violations.is_empty(),
        immune: immunity_failures.is_empty(),
        violations,
        immunity_failures,
    }
}
