use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use trap_core::net::PolicyKind;
use trap_core::params::{parse_rational, Rational};
use trap_core::sim::Mutation;
use trap_harness::acceptance::{run_all, Fixture};
use trap_harness::golden;
use trap_harness::params_cmd::params_report;
use trap_harness::report::simulate;
use trap_harness::scenario::{resolve, schema};
use trap_harness::sweep::{parse_list, sweep, Baiters, SweepSpec};

#[derive(Parser)]
#[command(name = "trap", about = "Simulator and checks for baiting-based rational agreement")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form thresholds for n players, optionally for a (k, t) coalition.
    Params {
        n: u32,
        k: Option<u32>,
        t: Option<u32>,
        /// Total gain G.
        #[arg(long, default_value = "60")]
        gain: String,
        /// Deposit coefficient; defaults to the worst case over all coalitions.
        #[arg(long)]
        d: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario (bundled name or TOML path) and write its report.
    Simulate {
        scenario: String,
        /// Output directory for report.json and per-seed traces.
        #[arg(long, default_value = "trap-out")]
        out: PathBuf,
        /// Skip writing per-seed trace logs.
        #[arg(long)]
        no_traces: bool,
    },
    /// Cartesian sweep over n, k, t and d.
    Sweep {
        #[arg(long)]
        n: String,
        #[arg(long)]
        k: String,
        #[arg(long)]
        t: String,
        /// Comma-separated coefficients; `worst` is the worst case for each n.
        #[arg(long, default_value = "worst")]
        d: String,
        #[arg(long, default_value = "0..=19")]
        seeds: String,
        /// Comma-separated policies, or `all`.
        #[arg(long, default_value = "all")]
        policies: String,
        /// `m`, `m-1`, or a fixed count.
        #[arg(long, default_value = "m")]
        baiters: Baiters,
        #[arg(long)]
        include_infeasible: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite; exits non-zero if any criterion fails.
    Verify {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Replay a golden scenario and diff it against the checked-in logs.
    Trace {
        name: String,
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Rewrite the golden logs from the current code.
        #[arg(long)]
        bless: bool,
        #[arg(long)]
        mutation: Option<String>,
    },
    /// Print the JSON schema for scenario files.
    Schema,
}

fn policies(s: &str) -> Result<Vec<PolicyKind>> {
    if s == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    s.split(',')
        .map(|p| PolicyKind::ALL.into_iter().find(|k| k.name() == p.trim()).with_context(|| format!("unknown policy {p:?}")))
        .collect()
}

fn mutation(s: &str) -> Result<Mutation> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).with_context(|| format!("unknown mutation {s:?}"))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Params { n, k, t, gain, d, json } => {
            let coalition = match (k, t) {
                (Some(k), Some(t)) => Some((k, t)),
                (None, None) => None,
                _ => anyhow::bail!("give both k and t, or neither"),
            };
            let gain = parse_rational(&gain)?;
            let d = d.as_deref().map(parse_rational).transpose()?;
            let r = params_report(n, coalition, gain, d)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!("{r}");
            }
        }
        Cmd::Simulate { scenario, out, no_traces } => {
            let sc = resolve(&scenario)?;
            let report = simulate(&sc, !no_traces)?;
            let dir = out.join(&sc.name);
            std::fs::create_dir_all(&dir)?;
            if !no_traces {
                for r in &report.runs {
                    let body: String = r.trace.iter().map(|l| format!("{l}\n")).collect();
                    std::fs::write(dir.join(format!("{}-{}.trace", r.policy.name(), r.seed)), body)?;
                }
            }
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            println!("scenario {} ({} runs) digest {}", sc.name, report.runs.len(), report.digest);
            for (class, count) in &report.class_counts {
                println!("  {:<16} {count}", format!("{class:?}"));
            }
            for s in &report.stats {
                println!("  {:<10} mean {} min {} max {}", s.strategy.name(), s.mean, s.min, s.max);
            }
            for a in &report.assertions {
                println!("  {} {} {}", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
            }
            println!("report written to {}", dir.join("report.json").display());
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Sweep { n, k, t, d, seeds, policies: pols, baiters, include_infeasible, json } => {
            let d = d
                .split(',')
                .map(|x| if x.trim() == "worst" { Ok(None) } else { parse_rational(x).map(Some) })
                .collect::<Result<Vec<Option<Rational>>, _>>()?;
            let spec = SweepSpec {
                n: parse_list(&n)?,
                k: parse_list(&k)?,
                t: parse_list(&t)?,
                d,
                seeds: parse_list(&seeds)?,
                policies: policies(&pols)?,
                baiters,
                include_infeasible,
            };
            let rows = sweep(&spec)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!("   n   k   t  d        m  bait  runs  disagree  resolved  nonterm  mean-bait  mean-disagree");
                for r in rows {
                    println!(
                        "{:>4}{:>4}{:>4}  {:<7}{:>3}{:>6}{:>6}{:>10}{:>10}{:>9}  {:<9}  {}",
                        r.n,
                        r.k,
                        r.t,
                        r.d,
                        r.m,
                        r.baiters,
                        r.runs,
                        r.disagreements,
                        r.resolved,
                        r.non_terminating,
                        r.mean_bait.unwrap_or_else(|| "-".into()),
                        r.mean_disagree.unwrap_or_else(|| "-".into())
                    );
                }
            }
        }
        Cmd::Verify { only, json } => {
            let only: Vec<u8> = match only {
                Some(s) => s.split(',').map(|x| x.trim().parse::<u8>()).collect::<Result<_, _>>()?,
                None => Vec::new(),
            };
            let results = run_all(&Fixture::default(), &only, |r| {
                if !json {
                    println!("{r}");
                }
            });
            let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
            if json {
                println!("{}", serde_json::to_string_pretty(&results)?);
            } else if failed.is_empty() {
                println!("all {} criteria passed", results.len());
            } else {
                println!("failing criteria: {failed:?}");
            }
            if !failed.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Trace { name, dir, bless, mutation: m } => {
            let dir = dir.unwrap_or_else(golden::default_dir);
            if bless {
                let rep = golden::bless(&dir, &name)?;
                print!("{}", rep.milestones);
                println!("blessed {} ({} trace lines)", name, rep.trace.lines().count());
                return Ok(ExitCode::SUCCESS);
            }
            let m = m.as_deref().map(mutation).transpose()?;
            let c = golden::check(&dir, &name, m)?;
            print!("{}", c.diff);
            if !c.terminated {
                println!("replay did not terminate");
            }
            if !c.ordered {
                println!("milestones out of order or missing");
            }
            if !c.passed() {
                return Ok(ExitCode::FAILURE);
            }
            println!("{name}: milestones and trace match");
        }
        Cmd::Schema => print!("{}", schema()),
    }
    Ok(ExitCode::SUCCESS)
}
