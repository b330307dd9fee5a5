//! Batch execution of a scenario and the JSON report built from it.

use std::collections::BTreeMap;

use anyhow::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use trap_core::bftcr::BftcrDecision;
use trap_core::net::PolicyKind;
use trap_core::params::{format_rational, Rational};
use trap_core::sim::{run, RunResult};
use trap_core::strategy::{classify_run, compute_utilities, PayoffConfig, RunClass, RunOutcome, StrategyKind};
use trap_core::PlayerId;

use crate::scenario::{hex_digest, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRun {
    pub policy: PolicyKind,
    pub seed: u64,
    pub steps: u64,
    pub terminated: bool,
    pub messages: u64,
    pub winner: Option<PlayerId>,
    pub slashed: Vec<PlayerId>,
    /// Decisions of players outside the coalition.
    pub decisions: Vec<Option<String>>,
    pub strategies: Vec<StrategyKind>,
    pub classes: Vec<RunClass>,
    pub utilities: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<String>,
    #[serde(skip)]
    pub utility_values: Vec<Rational>,
    #[serde(skip)]
    pub outcome: Option<RunOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub strategy: StrategyKind,
    pub observations: usize,
    pub mean: String,
    pub min: String,
    pub max: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_digest: String,
    pub runs: Vec<SeedRun>,
    pub class_counts: BTreeMap<RunClass, usize>,
    pub stats: Vec<StrategyStats>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    /// Hash over everything above.
    pub digest: String,
}

pub fn describe_decision(d: &BftcrDecision) -> String {
    match d {
        BftcrDecision::ValueDecided { value } => format!("decide {}", String::from_utf8_lossy(value)),
        BftcrDecision::Resolved { value, winner, punished } => {
            format!("resolve {} winner={} punished={:?}", String::from_utf8_lossy(value), winner, punished)
        }
    }
}

/// Worker pool sized by `TRAP_THREADS` when set.
pub fn pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("TRAP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

fn seed_run(sc: &Scenario, policy: PolicyKind, seed: u64, record_trace: bool) -> Result<SeedRun> {
    let params = sc.protocol_params()?;
    let fin = sc.financial()?;
    let mut cfg = sc.sim_config(&params, policy, seed);
    cfg.record_trace = record_trace;
    let plan = cfg.plan.clone();
    let r: RunResult = run(&cfg);
    let outcome = classify_run(params.n, plan.as_deref(), &r.decisions);
    let util = compute_utilities(&outcome, plan.as_deref(), &fin, &params, &PayoffConfig::default());
    let strategies = (0..params.n).map(|p| plan.as_ref().map_or(StrategyKind::Correct, |pl| pl.strategy_of(p))).collect();
    Ok(SeedRun {
        policy,
        seed,
        steps: r.steps,
        terminated: r.terminated,
        messages: r.messages,
        winner: outcome.winner,
        slashed: outcome.slashed.iter().copied().collect(),
        decisions: outcome.decisions.iter().map(|d| d.as_ref().map(describe_decision)).collect(),
        strategies,
        classes: outcome.classes.clone(),
        utilities: util.utilities.iter().map(format_rational).collect(),
        trace: r.trace,
        utility_values: util.utilities,
        outcome: Some(outcome),
    })
}

/// Runs every (policy, seed) pair; results come back in policy-then-seed order.
pub fn run_batch(sc: &Scenario, record_trace: bool) -> Result<Vec<SeedRun>> {
    let jobs: Vec<(PolicyKind, u64)> = sc.schedule.policies.iter().flat_map(|&p| sc.seeds().map(move |s| (p, s))).collect();
    pool().install(|| jobs.par_iter().map(|&(p, s)| seed_run(sc, p, s, record_trace)).collect())
}

fn stats(runs: &[SeedRun]) -> Vec<StrategyStats> {
    let mut by: BTreeMap<StrategyKind, Vec<Rational>> = BTreeMap::new();
    for r in runs {
        for (s, u) in r.strategies.iter().zip(&r.utility_values) {
            by.entry(*s).or_default().push(*u);
        }
    }
    by.into_iter()
        .map(|(strategy, us)| {
            let sum: Rational = us.iter().sum();
            let mean = sum / Rational::from_integer(us.len() as i128);
            StrategyStats {
                strategy,
                observations: us.len(),
                mean: format_rational(&mean),
                min: format_rational(us.iter().min().expect("non-empty")),
                max: format_rational(us.iter().max().expect("non-empty")),
            }
        })
        .collect()
}

fn check(sc: &Scenario, runs: &[SeedRun]) -> Vec<Assertion> {
    let e = &sc.expect;
    let mut out = Vec::new();
    let mut add = |name: &str, bad: Vec<String>| {
        out.push(Assertion { name: name.to_string(), passed: bad.is_empty(), detail: bad.into_iter().take(5).collect::<Vec<_>>().join("; ") });
    };
    let tag = |r: &SeedRun| format!("{}#{}", r.policy.name(), r.seed);
    if let Some(allowed) = &e.allowed_classes {
        let bad = runs
            .iter()
            .filter_map(|r| r.classes.iter().find(|c| !allowed.contains(c)).map(|c| format!("{} has {c:?}", tag(r))))
            .collect();
        add("allowed_classes", bad);
    }
    if !e.required_classes.is_empty() {
        let bad = e
            .required_classes
            .iter()
            .filter(|c| !runs.iter().any(|r| r.classes.contains(c)))
            .map(|c| format!("{c:?} never observed"))
            .collect();
        add("required_classes", bad);
    }
    if e.agreement {
        let bad = runs
            .iter()
            .filter(|r| r.outcome.as_ref().is_some_and(RunOutcome::disagreement))
            .map(|r| format!("{} disagrees", tag(r)))
            .collect();
        add("agreement", bad);
    }
    if e.resolved {
        let bad = runs.iter().filter(|r| r.winner.is_none()).map(|r| format!("{} unresolved", tag(r))).collect();
        add("resolved", bad);
    }
    if let Some(n) = e.slashed {
        let bad = runs
            .iter()
            .filter(|r| r.winner.is_some() && r.slashed.len() != n)
            .map(|r| format!("{} slashed {}", tag(r), r.slashed.len()))
            .collect();
        add("slashed", bad);
    }
    out
}

pub fn build_report(sc: &Scenario, runs: Vec<SeedRun>) -> RunReport {
    let mut class_counts = BTreeMap::new();
    for r in &runs {
        for c in &r.classes {
            *class_counts.entry(*c).or_insert(0) += 1;
        }
    }
    let stats = stats(&runs);
    let assertions = check(sc, &runs);
    let passed = assertions.iter().all(|a| a.passed);
    let mut report = RunReport {
        scenario: sc.name.clone(),
        scenario_digest: sc.digest(),
        runs,
        class_counts,
        stats,
        assertions,
        passed,
        digest: String::new(),
    };
    report.digest = hex_digest(&serde_json::to_vec(&report).expect("report serializes"));
    report
}

pub fn simulate(sc: &Scenario, record_trace: bool) -> Result<RunReport> {
    Ok(build_report(sc, run_batch(sc, record_trace)?))
}
