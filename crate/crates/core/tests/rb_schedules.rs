use trap_core::rb_explore::{equivocation_scenarios_n4, explore_exhaustive, explore_random, random_equivocation_scenario};

#[test]
fn every_schedule_at_four_players() {
    for sc in equivocation_scenarios_n4() {
        let r = explore_exhaustive(&sc);
        assert!(r.ok(), "{:?}: {:?}", sc.injected, r.violations);
    }
}

#[test]
fn random_schedules_at_seven_players() {
    for seed in 0..500 {
        let sc = random_equivocation_scenario(7, seed);
        assert_eq!(sc.byzantine.len(), 2);
        let v = explore_random(&sc, seed);
        assert!(v.is_empty(), "seed {seed}: {v:?}");
    }
}
