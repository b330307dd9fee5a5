//! Cartesian sweeps over `(n, k, t, d)` with per-configuration summaries.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use trap_core::net::PolicyKind;
use trap_core::params::{feasible, format_rational, DepositMode, FinancialParams, ProtocolParams, Rational};
use trap_core::sim::{run, SimConfig};
use trap_core::strategy::{classify_run, compute_utilities, CoalitionPlan, PayoffConfig, StrategyKind};

use crate::report::pool;

/// Parses `7`, `4,7,10`, `7..13` (exclusive) or `7..=13`.
pub fn parse_list(s: &str) -> Result<Vec<u64>> {
    let num = |x: &str| x.trim().parse::<u64>().with_context(|| format!("bad number {x:?} in {s:?}"));
    if let Some((a, b)) = s.split_once("..=") {
        return Ok((num(a)?..=num(b)?).collect());
    }
    if let Some((a, b)) = s.split_once("..") {
        return Ok((num(a)?..num(b)?).collect());
    }
    s.split(',').map(num).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baiters {
    /// The effective `m(k, t)` of each configuration.
    Optimal,
    /// One fewer than the effective `m(k, t)`, floored at zero.
    BelowOptimal,
    Fixed(u32),
}

impl std::str::FromStr for Baiters {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "m" => Baiters::Optimal,
            "m-1" => Baiters::BelowOptimal,
            _ => Baiters::Fixed(s.parse().with_context(|| format!("baiters must be m, m-1 or a number, got {s:?}"))?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n: Vec<u64>,
    pub k: Vec<u64>,
    pub t: Vec<u64>,
    /// Deposit coefficients; `None` means the worst case for each `n`.
    pub d: Vec<Option<Rational>>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub baiters: Baiters,
    pub include_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub n: u32,
    pub k: u32,
    pub t: u32,
    pub d: String,
    pub feasible: bool,
    pub m: i64,
    pub baiters: u32,
    pub runs: usize,
    pub disagreements: usize,
    pub resolved: usize,
    pub non_terminating: usize,
    pub mean_bait: Option<String>,
    pub mean_disagree: Option<String>,
}

fn row(n: u32, k: u32, t: u32, d: Option<Rational>, spec: &SweepSpec) -> Result<SweepRow> {
    let g = Rational::from_integer(60);
    let one = Rational::from_integer(1);
    let p = match d {
        Some(d) => ProtocolParams::with_delta(n, k, t, g, d, one)?,
        None => ProtocolParams::corollary(n, k, t, g, one)?,
    };
    let fin = FinancialParams::derive(&p, DepositMode::Corollary);
    let m = p.effective_m();
    let baiters = match spec.baiters {
        Baiters::Optimal => m,
        Baiters::BelowOptimal => m.saturating_sub(1),
        Baiters::Fixed(b) => b.min(k),
    };
    let mut r = SweepRow {
        n,
        k,
        t,
        d: format_rational(&p.deposit_coeff),
        feasible: feasible(n, k, t),
        m: p.m(),
        baiters,
        runs: 0,
        disagreements: 0,
        resolved: 0,
        non_terminating: 0,
        mean_bait: None,
        mean_disagree: None,
    };
    let (mut bait, mut dis) = ((Rational::default(), 0i128), (Rational::default(), 0i128));
    for &policy in &spec.policies {
        for &seed in &spec.seeds {
            let plan = CoalitionPlan::best_effort(&p, baiters, seed);
            let res = run(&SimConfig::new(n, k, t, Some(plan.clone()), policy, seed));
            let out = classify_run(n, Some(&plan), &res.decisions);
            let u = compute_utilities(&out, Some(&plan), &fin, &p, &PayoffConfig::default());
            r.runs += 1;
            r.disagreements += usize::from(out.disagreement());
            r.resolved += usize::from(out.winner.is_some());
            r.non_terminating += usize::from(!res.terminated);
            for &id in &plan.rational {
                let acc = match plan.strategy_of(id) {
                    StrategyKind::Bait => &mut bait,
                    _ => &mut dis,
                };
                acc.0 += u.utilities[id as usize];
                acc.1 += 1;
            }
        }
    }
    let mean = |(s, c): (Rational, i128)| (c > 0).then(|| format_rational(&(s / Rational::from_integer(c))));
    r.mean_bait = mean(bait);
    r.mean_disagree = mean(dis);
    Ok(r)
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let mut configs = Vec::new();
    for &n in &spec.n {
        for &k in &spec.k {
            for &t in &spec.t {
                for &d in &spec.d {
                    let (n, k, t) = (u32::try_from(n)?, u32::try_from(k)?, u32::try_from(t)?);
                    if n == 0 {
                        bail!("n must be positive");
                    }
                    if !spec.include_infeasible && !feasible(n, k, t) {
                        continue;
                    }
                    configs.push((n, k, t, d));
                }
            }
        }
    }
    pool().install(|| configs.par_iter().map(|&(n, k, t, d)| row(n, k, t, d, spec)).collect())
}
