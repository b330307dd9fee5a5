//! Golden replays: a single-seed scenario whose milestones and full trace
//! are checked in next to it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use similar::TextDiff;

use trap_core::sim::{run, Mutation};

use crate::scenario::Scenario;

pub fn default_dir() -> PathBuf {
    std::env::var_os("TRAP_GOLDEN_DIR").map_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("goldens"), PathBuf::from)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Replay {
    pub milestones: String,
    pub trace: String,
    pub terminated: bool,
}

/// Milestone indices seen in order, each of 1 through 5 at least once.
pub fn milestones_ordered(milestones: &str) -> bool {
    let idx: Vec<u8> = milestones.lines().filter_map(|l| l.split(' ').next()?.parse().ok()).collect();
    idx.windows(2).all(|w| w[0] <= w[1]) && (1..=5).all(|i| idx.contains(&i))
}

pub fn replay(dir: &Path, name: &str, mutation: Option<Mutation>) -> Result<Replay> {
    let sc = Scenario::load(&dir.join(format!("{name}.toml")))?;
    if sc.schedule.policies.len() != 1 || sc.schedule.seeds[0] != sc.schedule.seeds[1] {
        bail!("golden scenario {name} must pin one policy and one seed");
    }
    let params = sc.protocol_params()?;
    let mut cfg = sc.sim_config(&params, sc.schedule.policies[0], sc.schedule.seeds[0]);
    cfg.record_trace = true;
    if let Some(m) = mutation {
        cfg.mutation = m;
    }
    let r = run(&cfg);
    let lines = |v: Vec<String>| v.into_iter().map(|l| l + "\n").collect::<String>();
    Ok(Replay { milestones: lines(r.milestones.iter().map(|m| m.line()).collect()), trace: lines(r.trace), terminated: r.terminated })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceCheck {
    pub name: String,
    pub milestones_match: bool,
    pub trace_match: bool,
    pub ordered: bool,
    pub terminated: bool,
    /// Unified diff of milestones, then the first trace divergence; empty
    /// when both match.
    pub diff: String,
}

impl TraceCheck {
    pub fn passed(&self) -> bool {
        self.milestones_match && self.trace_match && self.ordered && self.terminated
    }
}

fn diff(label: &str, golden: &str, actual: &str) -> String {
    if golden == actual {
        return String::new();
    }
    TextDiff::from_lines(golden, actual).unified_diff().context_radius(2).header(&format!("golden/{label}"), &format!("replay/{label}")).to_string()
}

/// Traces can run to hundreds of thousands of lines when a mutation stalls
/// the run, so only the neighbourhood of the first divergence is shown.
fn trace_diff(golden: &str, actual: &str) -> String {
    if golden == actual {
        return String::new();
    }
    let (g, a): (Vec<&str>, Vec<&str>) = (golden.lines().collect(), actual.lines().collect());
    let at = g.iter().zip(&a).position(|(x, y)| x != y).unwrap_or(g.len().min(a.len()));
    let from = at.saturating_sub(2);
    let mut out = format!("--- golden/trace ({} lines)\n+++ replay/trace ({} lines)\n@@ first divergence at line {} @@\n", g.len(), a.len(), at + 1);
    for l in &g[from..at] {
        out.push_str(&format!(" {l}\n"));
    }
    for l in g.iter().skip(at).take(6) {
        out.push_str(&format!("-{l}\n"));
    }
    for l in a.iter().skip(at).take(6) {
        out.push_str(&format!("+{l}\n"));
    }
    out
}

pub fn check(dir: &Path, name: &str, mutation: Option<Mutation>) -> Result<TraceCheck> {
    let rep = replay(dir, name, mutation)?;
    let read = |ext: &str| {
        let p = dir.join(format!("{name}.{ext}"));
        std::fs::read_to_string(&p).with_context(|| format!("reading {}; run `trap trace {name} --bless` to create it", p.display()))
    };
    let (gm, gt) = (read("milestones")?, read("trace")?);
    let mut d = diff("milestones", &gm, &rep.milestones);
    d.push_str(&trace_diff(&gt, &rep.trace));
    Ok(TraceCheck {
        name: name.to_string(),
        milestones_match: gm == rep.milestones,
        trace_match: gt == rep.trace,
        ordered: milestones_ordered(&rep.milestones),
        terminated: rep.terminated,
        diff: d,
    })
}

pub fn bless(dir: &Path, name: &str) -> Result<Replay> {
    let rep = replay(dir, name, None)?;
    if !milestones_ordered(&rep.milestones) || !rep.terminated {
        bail!("refusing to bless {name}: milestones out of order or run did not terminate\n{}", rep.milestones);
    }
    std::fs::write(dir.join(format!("{name}.milestones")), &rep.milestones)?;
    std::fs::write(dir.join(format!("{name}.trace")), &rep.trace)?;
    Ok(rep)
}
