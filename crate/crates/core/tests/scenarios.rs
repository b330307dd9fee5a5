use trap_core::analysis::{check_dominance_empirical, check_robustness, StrategyLibrary};
use trap_core::net::PolicyKind;
use trap_core::params::{min_deposit_coeff, DepositBound, DepositMode, FinancialParams, ProtocolParams, Rational};
use trap_core::sim::{run, SimConfig};
use trap_core::strategy::{classify_run, compute_utilities, CoalitionPlan, PayoffConfig, RunClass, StrategyKind};

fn cor(n: u32, k: u32, t: u32) -> ProtocolParams {
    ProtocolParams::corollary(n, k, t, Rational::from_integer(60), Rational::from_integer(1)).unwrap()
}

fn int(v: i128) -> Rational {
    Rational::from_integer(v)
}

#[test]
fn honest_run_agrees() {
    for policy in PolicyKind::ALL {
        let r = run(&SimConfig::new(4, 0, 0, None, policy, 3));
        assert!(r.terminated);
        let out = classify_run(4, None, &r.decisions);
        assert!(out.identical);
        assert!(out.classes.iter().all(|&c| c == RunClass::Agreement));
    }
}

#[test]
fn lone_baiter_traps_the_rest() {
    let p = cor(10, 2, 2);
    let fin = FinancialParams::derive(&p, DepositMode::Corollary);
    for seed in 0..5 {
        let plan = CoalitionPlan::best_effort(&p, 1, seed);
        let r = run(&SimConfig::new(10, 2, 2, Some(plan.clone()), PolicyKind::PartitionAdversarial, seed));
        let out = classify_run(10, Some(&plan), &r.decisions);
        let baiter = plan.members_with(StrategyKind::Bait)[0];
        assert_eq!(out.winner, Some(baiter));
        assert!(out.identical);
        assert_eq!(out.slashed.len(), 3);
        for &m in &plan.members {
            let want = if m == baiter { RunClass::Baited } else { RunClass::Trapped };
            assert_eq!(out.classes[m as usize], want);
        }
        let u = compute_utilities(&out, Some(&plan), &fin, &p, &PayoffConfig::default());
        assert_eq!(u.utilities[baiter as usize], int(63));
        for m in plan.members.iter().filter(|&&m| m != baiter) {
            assert_eq!(u.utilities[*m as usize], int(-21));
        }
    }
}

#[test]
fn without_baiters_the_partition_splits_outsiders() {
    let p = cor(10, 2, 2);
    let plan = CoalitionPlan::best_effort(&p, 0, 1);
    let r = run(&SimConfig::new(10, 2, 2, Some(plan.clone()), PolicyKind::PartitionAdversarial, 1));
    let out = classify_run(10, Some(&plan), &r.decisions);
    for p in 0..10 {
        let want = if plan.is_member(p) { RunClass::Disagreement } else { RunClass::Victim };
        assert_eq!(out.classes[p as usize], want);
    }
}

#[test]
fn late_baiter_is_never_a_candidate() {
    let p = cor(10, 2, 2);
    for seed in 0..30 {
        for policy in PolicyKind::ALL {
            let mut plan = CoalitionPlan::best_effort(&p, 1, seed);
            let late = plan.members_with(StrategyKind::Disagree)[0];
            plan.strategies.insert(late, StrategyKind::LateBait);
            let r = run(&SimConfig::new(10, 2, 2, Some(plan), policy, seed));
            assert!(!r.valid_candidates.contains(&late), "seed {seed} {policy:?}");
        }
    }
}

#[test]
fn empirical_dominance() {
    let p = cor(10, 2, 2);
    let fin = FinancialParams::derive(&p, DepositMode::Corollary);
    let rep = check_dominance_empirical(&p, &fin, 0..20);
    assert!(rep.analytic && rep.holds);
    assert_eq!(rep.m, 1);
    assert_eq!(rep.bait_mean, fin.reward);
    assert!(rep.bait_mean > rep.gain_share);
    assert_eq!(rep.with_m.resolved, 20);

    let DepositBound::Above(min) = min_deposit_coeff(10, 2, 2).unwrap() else { panic!() };
    let mut low = p.clone();
    low.deposit_coeff = min / int(2);
    let low_fin = FinancialParams::derive(&low, DepositMode::Plain);
    let rep = check_dominance_empirical(&low, &low_fin, 0..20);
    assert!(!rep.analytic);
    assert!(rep.bait_mean < rep.gain_share);
}

#[test]
fn library_robustness() {
    let p = cor(10, 2, 2);
    let fin = FinancialParams::derive(&p, DepositMode::Corollary);
    let lib = StrategyLibrary::default();
    let rep = check_robustness(&p, &fin, &lib, Rational::from_integer(0), 0..1);
    assert_eq!(rep.profiles, 31 * 13);
    assert!(rep.robust, "{:?}", rep.violations);

    let mut free = fin.clone();
    free.reward = int(0);
    let rep = check_robustness(&p, &free, &lib, Rational::from_integer(0), 0..1);
    assert!(rep.violations.iter().any(|v| v.rational.contains(&StrategyKind::Disagree)));

    let q = cor(10, 0, 3);
    let rep = check_robustness(&q, &FinancialParams::derive(&q, DepositMode::Corollary), &lib, int(0), 0..2);
    assert!(rep.immune, "{:?}", rep.immunity_failures);
}
