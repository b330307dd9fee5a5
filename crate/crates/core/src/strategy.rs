//! Strategy library, coalition planning, run classification and utility
//! accounting.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bftcr::BftcrDecision;
use crate::params::{FinancialParams, ProtocolParams, Rational};
use crate::PlayerId;

pub const VALUE_A: &[u8] = b"blockA";
pub const VALUE_B: &[u8] = b"blockB";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Correct,
    Disagree,
    Bait,
    LateBait,
    Silent,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] =
        [StrategyKind::Correct, StrategyKind::Disagree, StrategyKind::Bait, StrategyKind::LateBait, StrategyKind::Silent];

    /// Strategies a Byzantine member may be assigned in library sweeps.
    pub const BYZANTINE: [StrategyKind; 3] = [StrategyKind::Correct, StrategyKind::Disagree, StrategyKind::Silent];

    /// Double-signs during predecision.
    pub fn colludes(self) -> bool {
        matches!(self, StrategyKind::Disagree | StrategyKind::Bait | StrategyKind::LateBait)
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Correct => "correct",
            StrategyKind::Disagree => "disagree",
            StrategyKind::Bait => "bait",
            StrategyKind::LateBait => "late-bait",
            StrategyKind::Silent => "silent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("coalition of {size} cannot split certificates (needs more than t0 = {t0})")]
    CoalitionTooSmall { size: u32, t0: u32 },
    #[error("{baiters} baiters requested but only {k} rational members")]
    TooManyBaiters { baiters: u32, k: u32 },
    #[error("no balanced split lets both sides certify: |A|={a}, |B|={b}, coalition {c}, quorum {q}")]
    Unbalanced { a: usize, b: usize, c: usize, q: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionPlan {
    pub members: Vec<PlayerId>,
    pub rational: BTreeSet<PlayerId>,
    pub strategies: BTreeMap<PlayerId, StrategyKind>,
    pub a: Vec<PlayerId>,
    pub b: Vec<PlayerId>,
    pub value_a: Vec<u8>,
    pub value_b: Vec<u8>,
}

impl CoalitionPlan {
    /// Shuffles players with `seed`: the first `rational.len()` become
    /// rational members, the next `byzantine.len()` Byzantine, the rest are
    /// split into the two sides. Side A is the larger half, grown further if
    /// needed so that at least one side can certify with the colluders.
    pub fn from_profile(n: u32, t0: u32, rational: &[StrategyKind], byzantine: &[StrategyKind], seed: u64) -> Self {
        let ids = Self::shuffled_ids(n, seed);
        let k = rational.len();
        let size = k + byzantine.len();
        let mut strategies = BTreeMap::new();
        for (i, &s) in rational.iter().chain(byzantine).enumerate() {
            strategies.insert(ids[i], s);
        }
        let mut members: Vec<PlayerId> = ids[..size].to_vec();
        members.sort_unstable();
        let rational_set: BTreeSet<PlayerId> = ids[..k].iter().copied().collect();
        let mut rest = ids[size..].to_vec();
        let colluders = strategies.values().filter(|s| s.colludes()).count();
        let c = rest.len();
        let need = (n - t0) as usize;
        let mut a_len = c.div_ceil(2);
        if c / 2 + colluders < need {
            a_len = a_len.max(need.saturating_sub(colluders)).min(c);
        }
        let mut b = rest.split_off(a_len);
        let mut a = rest;
        a.sort_unstable();
        b.sort_unstable();
        Self { members, rational: rational_set, strategies, a, b, value_a: VALUE_A.to_vec(), value_b: VALUE_B.to_vec() }
    }

    /// Player order used by [`CoalitionPlan::from_profile`]: profile slot `i`
    /// goes to `ids[i]`.
    pub fn shuffled_ids(n: u32, seed: u64) -> Vec<PlayerId> {
        let mut ids: Vec<PlayerId> = (0..n).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x706c_616e));
        ids
    }

    /// Default profile: the first `baiters` rational members bait, every
    /// other member disagrees. Never fails; see [`build_coalition_plan`] for
    /// the strict variant.
    pub fn best_effort(params: &ProtocolParams, baiters: u32, seed: u64) -> Self {
        let baiters = baiters.min(params.k);
        let rational: Vec<StrategyKind> = (0..params.k)
            .map(|i| if i < baiters { StrategyKind::Bait } else { StrategyKind::Disagree })
            .collect();
        let byzantine = vec![StrategyKind::Disagree; params.t as usize];
        Self::from_profile(params.n, params.t0, &rational, &byzantine, seed)
    }

    pub fn strategy_of(&self, p: PlayerId) -> StrategyKind {
        self.strategies.get(&p).copied().unwrap_or(StrategyKind::Correct)
    }

    pub fn is_member(&self, p: PlayerId) -> bool {
        self.strategies.contains_key(&p)
    }

    pub fn is_rational(&self, p: PlayerId) -> bool {
        self.rational.contains(&p)
    }

    pub fn colludes(&self, p: PlayerId) -> bool {
        self.strategy_of(p).colludes()
    }

    pub fn in_b(&self, p: PlayerId) -> bool {
        self.b.binary_search(&p).is_ok()
    }

    pub fn members_with(&self, kind: StrategyKind) -> Vec<PlayerId> {
        self.strategies.iter().filter(|(_, &s)| s == kind).map(|(&p, _)| p).collect()
    }

    /// Players outside the coalition.
    pub fn outsiders(&self) -> Vec<PlayerId> {
        let mut v: Vec<PlayerId> = self.a.iter().chain(&self.b).copied().collect();
        v.sort_unstable();
        v
    }

    pub fn input_of(&self, p: PlayerId) -> &[u8] {
        if self.in_b(p) {
            &self.value_b
        } else {
            &self.value_a
        }
    }

    /// Both sides can certify their own value with the colluders' votes.
    pub fn is_balanced_split(&self, quorum: usize) -> bool {
        let c = self.strategies.values().filter(|s| s.colludes()).count();
        self.a.len() + c >= quorum && self.b.len() + c >= quorum
    }
}

pub fn build_coalition_plan(params: &ProtocolParams, baiters: u32, seed: u64) -> Result<CoalitionPlan, PlanError> {
    let size = params.k + params.t;
    if size <= params.t0 {
        return Err(PlanError::CoalitionTooSmall { size, t0: params.t0 });
    }
    if baiters > params.k {
        return Err(PlanError::TooManyBaiters { baiters, k: params.k });
    }
    let plan = CoalitionPlan::best_effort(params, baiters, seed);
    let q = params.quorum();
    if !plan.is_balanced_split(q) || plan.a.len().abs_diff(plan.b.len()) > 1 {
        return Err(PlanError::Unbalanced { a: plan.a.len(), b: plan.b.len(), c: size as usize, q });
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum RunClass {
    Agreement = 1,
    Disagreement = 2,
    Baited = 3,
    Trapped = 4,
    NonTermination = 5,
    Victim = 6,
}

impl RunClass {
    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Decisions of players outside the coalition; `None` for members and
    /// for outsiders that never decided.
    pub decisions: Vec<Option<BftcrDecision>>,
    pub winner: Option<PlayerId>,
    pub slashed: BTreeSet<PlayerId>,
    pub classes: Vec<RunClass>,
    /// All deciding outsiders output the identical decision.
    pub identical: bool,
}

impl RunOutcome {
    pub fn disagreement(&self) -> bool {
        self.classes.contains(&RunClass::Disagreement) || self.classes.contains(&RunClass::Victim)
    }

    pub fn resolved(&self) -> Option<&BftcrDecision> {
        self.decisions.iter().flatten().find(|d| d.is_resolved())
    }
}

/// `decisions` holds one entry per player; entries for coalition members
/// are ignored.
pub fn classify_run(n: u32, plan: Option<&CoalitionPlan>, decisions: &[Option<BftcrDecision>]) -> RunOutcome {
    let member = |p: PlayerId| plan.is_some_and(|pl| pl.is_member(p));
    let outsider_decisions: Vec<Option<BftcrDecision>> =
        (0..n).map(|p| if member(p) { None } else { decisions[p as usize].clone() }).collect();
    let decided: Vec<&BftcrDecision> = outsider_decisions.iter().flatten().collect();
    let values: BTreeSet<&[u8]> = decided.iter().map(|d| d.value()).collect();
    let identical = decided.windows(2).all(|w| w[0] == w[1]);
    let all_decided = (0..n).filter(|&p| !member(p)).all(|p| outsider_decisions[p as usize].is_some());

    let mut winner = None;
    let mut slashed = BTreeSet::new();
    let classes: Vec<RunClass> = if values.len() > 1 {
        (0..n).map(|p| if member(p) { RunClass::Disagreement } else { RunClass::Victim }).collect()
    } else if !all_decided {
        vec![RunClass::NonTermination; n as usize]
    } else if let Some(BftcrDecision::Resolved { winner: w, punished, .. }) = decided.iter().find(|d| d.is_resolved()) {
        winner = Some(*w);
        slashed = punished.iter().copied().collect();
        (0..n)
            .map(|p| {
                let baiter = plan.is_some_and(|pl| pl.strategy_of(p) == StrategyKind::Bait);
                if p == *w || (slashed.contains(&p) && baiter) {
                    RunClass::Baited
                } else if slashed.contains(&p) {
                    RunClass::Trapped
                } else {
                    RunClass::Agreement
                }
            })
            .collect()
    } else {
        vec![RunClass::Agreement; n as usize]
    };
    RunOutcome { decisions: outsider_decisions, winner, slashed, classes, identical }
}

/// Payoffs the model leaves open; defaults are configuration, not results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoffConfig {
    pub agreement: Rational,
    pub non_termination: Rational,
    /// Defaults to `-G/k` when unset.
    pub victim: Option<Rational>,
}

impl Default for PayoffConfig {
    fn default() -> Self {
        Self { agreement: Rational::from_integer(1), non_termination: Rational::from_integer(-1), victim: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub utilities: Vec<Rational>,
}

impl UtilityReport {
    pub fn total(&self, players: impl IntoIterator<Item = PlayerId>) -> Rational {
        players.into_iter().map(|p| self.utilities[p as usize]).sum()
    }
}

pub fn compute_utilities(
    outcome: &RunOutcome,
    plan: Option<&CoalitionPlan>,
    fin: &FinancialParams,
    params: &ProtocolParams,
    payoffs: &PayoffConfig,
) -> UtilityReport {
    let share = params.gain_share();
    let victim = payoffs.victim.unwrap_or(-share);
    let utilities = outcome
        .classes
        .iter()
        .enumerate()
        .map(|(p, class)| {
            let p = p as PlayerId;
            match class {
                RunClass::Agreement => payoffs.agreement,
                RunClass::Disagreement => {
                    if plan.is_some_and(|pl| pl.is_rational(p)) {
                        share
                    } else {
                        Rational::zero()
                    }
                }
                RunClass::Baited if outcome.winner == Some(p) => fin.reward,
                RunClass::Baited | RunClass::Trapped => -fin.deposit,
                RunClass::NonTermination => payoffs.non_termination,
                RunClass::Victim => victim,
            }
        })
        .collect();
    UtilityReport { utilities }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{DepositMode, ProtocolParams};

    fn params(n: u32, k: u32, t: u32) -> ProtocolParams {
        ProtocolParams::corollary(n, k, t, Rational::from_integer(60), Rational::from_integer(1)).unwrap()
    }

    #[test]
    fn balanced_plans() {
        let plan = build_coalition_plan(&params(10, 2, 2), 1, 7).unwrap();
        assert_eq!((plan.a.len(), plan.b.len()), (3, 3));
        assert_eq!(plan.members.len(), 4);
        assert_eq!(plan.members_with(StrategyKind::Bait).len(), 1);
        assert!(plan.members_with(StrategyKind::Bait).iter().all(|p| plan.is_rational(*p)));
        let plan = build_coalition_plan(&params(13, 3, 2), 0, 7).unwrap();
        assert_eq!((plan.a.len(), plan.b.len()), (4, 4));
        assert!(plan.a.len() + 5 >= 9);
        assert_eq!(
            build_coalition_plan(&params(10, 1, 2), 0, 7),
            Err(PlanError::CoalitionTooSmall { size: 3, t0: 3 })
        );
        assert!(matches!(build_coalition_plan(&params(10, 2, 2), 3, 7), Err(PlanError::TooManyBaiters { .. })));
    }

    #[test]
    fn best_effort_lets_one_side_certify() {
        // n=11, t0=3: four colluders cannot give both sides 8 votes.
        let p = params(11, 2, 2);
        assert!(build_coalition_plan(&p, 0, 1).is_err());
        let plan = CoalitionPlan::best_effort(&p, 0, 1);
        assert_eq!(plan.a.len(), 4);
        assert_eq!(plan.b.len(), 3);
    }

    #[test]
    fn plan_partitions_players() {
        for seed in 0..20 {
            let plan = CoalitionPlan::best_effort(&params(13, 3, 2), 1, seed);
            let mut all: Vec<PlayerId> = plan.members.iter().chain(&plan.a).chain(&plan.b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..13).collect::<Vec<_>>());
        }
    }

    fn resolved(winner: PlayerId, punished: Vec<PlayerId>) -> Option<BftcrDecision> {
        Some(BftcrDecision::Resolved { value: VALUE_A.to_vec(), winner, punished })
    }

    #[test]
    fn classification_and_payoffs() {
        let p = params(10, 2, 2);
        let fin = FinancialParams::derive(&p, DepositMode::Corollary);
        assert_eq!(fin.deposit, Rational::from_integer(21));
        assert_eq!(fin.reward, Rational::from_integer(63));
        let plan = CoalitionPlan::best_effort(&p, 1, 3);
        let baiter = plan.members_with(StrategyKind::Bait)[0];
        let others: Vec<PlayerId> = plan.members.iter().copied().filter(|&m| m != baiter).collect();
        let decisions: Vec<_> = (0..10).map(|_| resolved(baiter, others.clone())).collect();
        let out = classify_run(10, Some(&plan), &decisions);
        assert_eq!(out.winner, Some(baiter));
        assert_eq!(out.classes[baiter as usize], RunClass::Baited);
        for &o in &others {
            assert_eq!(out.classes[o as usize], RunClass::Trapped);
        }
        let u = compute_utilities(&out, Some(&plan), &fin, &p, &PayoffConfig::default());
        assert_eq!(u.utilities[baiter as usize], Rational::from_integer(63));
        assert_eq!(u.utilities[others[0] as usize], Rational::from_integer(-21));

        let mut split: Vec<Option<BftcrDecision>> = vec![None; 10];
        for &a in &plan.a {
            split[a as usize] = Some(BftcrDecision::ValueDecided { value: VALUE_A.to_vec() });
        }
        for &b in &plan.b {
            split[b as usize] = Some(BftcrDecision::ValueDecided { value: VALUE_B.to_vec() });
        }
        let out = classify_run(10, Some(&plan), &split);
        let rational = *plan.rational.iter().next().unwrap();
        assert_eq!(out.classes[rational as usize], RunClass::Disagreement);
        assert_eq!(out.classes[plan.a[0] as usize], RunClass::Victim);
        let u = compute_utilities(&out, Some(&plan), &fin, &p, &PayoffConfig::default());
        assert_eq!(u.utilities[rational as usize], Rational::from_integer(30));

        let mut partial = split.clone();
        for &b in &plan.b {
            partial[b as usize] = None;
        }
        let out = classify_run(10, Some(&plan), &partial);
        assert!(out.classes.iter().all(|&c| c == RunClass::NonTermination));
        let honest: Vec<_> = (0..4).map(|_| Some(BftcrDecision::ValueDecided { value: VALUE_A.to_vec() })).collect();
        let out = classify_run(4, None, &honest);
        assert!(out.classes.iter().all(|&c| c == RunClass::Agreement));
    }
}
