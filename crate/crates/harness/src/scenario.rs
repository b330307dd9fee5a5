//! Scenario files: TOML on disk, validated against the core parameter rules.

use std::path::Path;

use anyhow::{bail, Context, Result};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use trap_core::net::PolicyKind;
use trap_core::params::{parse_rational, worst_case_deposit_coeff, DepositMode, FinancialParams, ProtocolParams};
use trap_core::sim::{Mutation, SimConfig};
use trap_core::strategy::{CoalitionPlan, RunClass, StrategyKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// The parameters are knowingly outside the feasible region.
    #[serde(default)]
    pub expect_infeasible: bool,
    pub params: ParamsSpec,
    #[serde(default)]
    pub coalition: CoalitionSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub n: u32,
    #[serde(default)]
    pub k: u32,
    #[serde(default)]
    pub t: u32,
    /// Total gain G, as an integer, fraction or decimal.
    #[serde(default = "default_gain")]
    pub gain: String,
    /// Deposit coefficient d; the worst case over all coalitions when unset.
    #[serde(default)]
    pub deposit_coeff: Option<String>,
    #[serde(default = "default_delta")]
    pub delta: String,
    #[serde(default = "default_mode")]
    pub deposit_mode: DepositMode,
}

fn default_gain() -> String {
    "60".into()
}

fn default_delta() -> String {
    "1".into()
}

fn default_mode() -> DepositMode {
    DepositMode::Corollary
}

/// Either `baiters` (the remaining members disagree) or an explicit
/// profile. Leaving both out runs without a coalition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CoalitionSpec {
    #[serde(default)]
    pub baiters: Option<u32>,
    #[serde(default)]
    pub rational: Option<Vec<StrategyKind>>,
    #[serde(default)]
    pub byzantine: Option<Vec<StrategyKind>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub policies: Vec<PolicyKind>,
    /// Inclusive seed interval `[first, last]`.
    pub seeds: [u64; 2],
    #[serde(default = "default_ceiling")]
    pub step_ceiling: u64,
    #[serde(default)]
    pub delta: Option<u64>,
    #[serde(default)]
    pub partition_cap: Option<u64>,
    #[serde(default)]
    pub mutation: Mutation,
}

fn default_ceiling() -> u64 {
    400_000
}

/// Assertions checked against every run of the scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// Every player's class in every run is one of these.
    #[serde(default)]
    pub allowed_classes: Option<Vec<RunClass>>,
    /// Each of these classes occurs in at least one run.
    #[serde(default)]
    pub required_classes: Vec<RunClass>,
    /// No two correct players decide differently.
    #[serde(default)]
    pub agreement: bool,
    /// Every run ends with a resolved decision.
    #[serde(default)]
    pub resolved: bool,
    /// Exact number of slashed players in every resolved run.
    #[serde(default)]
    pub slashed: Option<usize>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.n < 1 || p.n > 127 {
            bail!("params.n: {} is outside 1..=127", p.n);
        }
        let feasible = trap_core::params::feasible(p.n, p.k, p.t);
        if !feasible && !self.expect_infeasible {
            bail!("params: (n={}, k={}, t={}) is infeasible; tag the scenario expect_infeasible to run it anyway", p.n, p.k, p.t);
        }
        if feasible && self.expect_infeasible {
            bail!("expect_infeasible: (n={}, k={}, t={}) is feasible", p.n, p.k, p.t);
        }
        self.protocol_params()?;
        let c = &self.coalition;
        if c.baiters.is_some() && (c.rational.is_some() || c.byzantine.is_some()) {
            bail!("coalition: give either baiters or an explicit profile, not both");
        }
        if let Some(b) = c.baiters {
            if b > p.k {
                bail!("coalition.baiters: {b} exceeds k = {}", p.k);
            }
        }
        if c.rational.as_ref().is_some_and(|r| r.len() > p.k as usize) {
            bail!("coalition.rational: more than k = {} members", p.k);
        }
        if c.byzantine.as_ref().is_some_and(|r| r.len() > p.t as usize) {
            bail!("coalition.byzantine: more than t = {} members", p.t);
        }
        let s = &self.schedule;
        if s.policies.is_empty() {
            bail!("schedule.policies: empty");
        }
        if s.seeds[0] > s.seeds[1] {
            bail!("schedule.seeds: first seed {} is after last seed {}", s.seeds[0], s.seeds[1]);
        }
        Ok(())
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams> {
        let p = &self.params;
        let gain = parse_rational(&p.gain).context("params.gain")?;
        let delta = parse_rational(&p.delta).context("params.delta")?;
        let d = match &p.deposit_coeff {
            Some(d) => parse_rational(d).context("params.deposit_coeff")?,
            None => worst_case_deposit_coeff(p.n).unwrap_or_default(),
        };
        Ok(ProtocolParams::with_delta(p.n, p.k, p.t, gain, d, delta)?)
    }

    pub fn financial(&self) -> Result<FinancialParams> {
        Ok(FinancialParams::derive(&self.protocol_params()?, self.params.deposit_mode))
    }

    pub fn seeds(&self) -> std::ops::RangeInclusive<u64> {
        self.schedule.seeds[0]..=self.schedule.seeds[1]
    }

    pub fn plan(&self, params: &ProtocolParams, seed: u64) -> Option<CoalitionPlan> {
        let c = &self.coalition;
        if let Some(b) = c.baiters {
            return Some(CoalitionPlan::best_effort(params, b, seed));
        }
        if c.rational.is_none() && c.byzantine.is_none() {
            return None;
        }
        let rational = c.rational.clone().unwrap_or_default();
        let byzantine = c.byzantine.clone().unwrap_or_default();
        Some(CoalitionPlan::from_profile(params.n, params.t0, &rational, &byzantine, seed))
    }

    pub fn sim_config(&self, params: &ProtocolParams, policy: PolicyKind, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(params.n, params.k, params.t, self.plan(params, seed), policy, seed);
        cfg.step_ceiling = self.schedule.step_ceiling;
        cfg.delta = self.schedule.delta;
        cfg.partition_cap = self.schedule.partition_cap;
        cfg.mutation = self.schedule.mutation;
        cfg
    }

    /// Hash of the canonical JSON form; identical for equivalent files.
    pub fn digest(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("scenario serializes"))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn schema() -> String {
    serde_json::to_string_pretty(&schemars::schema_for!(Scenario)).expect("schema serializes") + "\n"
}

pub const BUNDLED: [(&str, &str); 3] = [
    ("honest_n4", include_str!("../scenarios/honest_n4.toml")),
    ("trap_n10_k2_t2_m1", include_str!("../scenarios/trap_n10_k2_t2_m1.toml")),
    ("tightness_n10_m0", include_str!("../scenarios/tightness_n10_m0.toml")),
];

/// A bundled scenario by name, or a file path.
pub fn resolve(name_or_path: &str) -> Result<Scenario> {
    match BUNDLED.iter().find(|(name, _)| *name == name_or_path) {
        Some((name, text)) => Scenario::from_toml(text).with_context(|| format!("bundled scenario {name}")),
        None => Scenario::load(Path::new(name_or_path)),
    }
}
