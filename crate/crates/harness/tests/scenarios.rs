use trap_harness::report::simulate;
use trap_harness::scenario::{resolve, schema, Scenario, BUNDLED};

const MINIMAL: &str = r#"
name = "tiny"
[params]
n = 4
[schedule]
policies = ["fifo"]
seeds = [0, 1]
"#;

fn err(text: &str) -> String {
    format!("{:#}", Scenario::from_toml(text).unwrap_err())
}

#[test]
fn minimal_scenario_gets_defaults() {
    let sc = Scenario::from_toml(MINIMAL).unwrap();
    assert_eq!((sc.params.k, sc.params.t), (0, 0));
    assert_eq!(sc.params.gain, "60");
    assert_eq!(sc.seeds().count(), 2);
    assert!(sc.plan(&sc.protocol_params().unwrap(), 0).is_none());
}

#[test]
fn unknown_field_is_named_with_its_line() {
    let e = err(&MINIMAL.replace("n = 4", "n = 4\nbogus = 1"));
    assert!(e.contains("bogus"), "{e}");
    assert!(e.contains("line 5"), "{e}");
}

#[test]
fn bad_type_points_at_the_field() {
    let e = err(&MINIMAL.replace("n = 4", "n = \"four\""));
    assert!(e.contains("line 4"), "{e}");
}

#[test]
fn unknown_policy_is_rejected() {
    let e = err(&MINIMAL.replace("fifo", "lifo"));
    assert!(e.contains("lifo"), "{e}");
}

#[test]
fn infeasible_needs_the_tag() {
    let text = MINIMAL.replace("n = 4", "n = 7\nk = 1\nt = 2");
    let e = err(&text);
    assert!(e.contains("infeasible"), "{e}");
    let tagged = text.replace("name = \"tiny\"", "name = \"tiny\"\nexpect_infeasible = true");
    Scenario::from_toml(&tagged).unwrap();
    let wrong = MINIMAL.replace("name = \"tiny\"", "name = \"tiny\"\nexpect_infeasible = true");
    assert!(err(&wrong).contains("feasible"));
}

#[test]
fn reversed_seeds_are_rejected() {
    let e = err(&MINIMAL.replace("[0, 1]", "[3, 1]"));
    assert!(e.contains("seeds"), "{e}");
}

#[test]
fn checked_in_schema_is_current() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/schema/scenario.schema.json");
    assert_eq!(std::fs::read_to_string(path).unwrap(), schema(), "regenerate with `trap schema`");
}

#[test]
fn bundled_scenarios_meet_their_expectations() {
    for (name, _) in BUNDLED {
        let sc = resolve(name).unwrap();
        let rep = simulate(&sc, false).unwrap();
        let failed: Vec<_> = rep.assertions.iter().filter(|a| !a.passed).collect();
        assert!(rep.passed, "{name}: {failed:?}");
    }
}

#[test]
fn reports_are_deterministic() {
    let sc = resolve("trap_n10_k2_t2_m1").unwrap();
    let a = simulate(&sc, true).unwrap();
    let b = simulate(&sc, true).unwrap();
    assert_eq!(a.digest, b.digest);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.scenario_digest, sc.digest());
    assert!(a.runs.iter().all(|r| !r.trace.is_empty()));
}

#[test]
fn digest_ignores_formatting() {
    let a = Scenario::from_toml(MINIMAL).unwrap();
    let b = Scenario::from_toml(&MINIMAL.replace("n = 4", "n    =   4 # four players")).unwrap();
    assert_eq!(a.digest(), b.digest());
    let c = Scenario::from_toml(&MINIMAL.replace("[0, 1]", "[0, 2]")).unwrap();
    assert_ne!(a.digest(), c.digest());
}
