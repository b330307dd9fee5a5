//! Each tampered fixture must make its criterion fail.

use trap_core::params::Rational;
use trap_core::sim::Mutation;
use trap_harness::acceptance::{run_all, CriterionResult, Fixture};

fn only(fx: &Fixture, id: u8) -> CriterionResult {
    run_all(fx, &[id], |_| {}).pop().unwrap()
}

#[test]
fn untampered_cheap_criteria_pass() {
    for r in run_all(&Fixture::default(), &[1, 2, 11], |_| {}) {
        assert!(r.passed, "{r}");
    }
}

#[test]
fn zero_reward_breaks_dominance() {
    let fx = Fixture { reward: Some(Rational::from_integer(0)), ..Fixture::default() };
    let r = only(&fx, 10);
    assert!(!r.passed, "{r}");
}

#[test]
fn weakened_quorums_break_broadcast() {
    let fx = Fixture { rb_quorum_shift: 1, ..Fixture::default() };
    let r = only(&fx, 9);
    assert!(!r.passed, "{r}");
}

#[test]
fn early_reveal_breaks_the_golden_trace() {
    let fx = Fixture { golden_mutation: Some(Mutation::EarlyReveal), ..Fixture::default() };
    let r = only(&fx, 11);
    assert!(!r.passed, "{r}");
}

#[test]
fn unhealed_partition_breaks_the_golden_trace() {
    let fx = Fixture { golden_mutation: Some(Mutation::NeverHeal), ..Fixture::default() };
    let r = only(&fx, 11);
    assert!(!r.passed, "{r}");
    assert!(r.detail.contains("terminat") || r.detail.contains("resolve"), "{r}");
}
