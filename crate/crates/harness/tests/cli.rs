use std::process::Command;

fn trap(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_trap")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

#[test]
fn params_prints_thresholds() {
    let (code, out) = trap(&["params", "10", "2", "2", "--json"]);
    assert_eq!(code, 0, "{out}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["t0"], 3);
    assert_eq!(v["coalition"]["m"], 1);
    assert_eq!(v["worst_case_deposit_coeff"], "1/3");
}

#[test]
fn params_rejects_half_a_coalition() {
    let (code, out) = trap(&["params", "10", "2"]);
    assert_eq!(code, 2, "{out}");
}

#[test]
fn schema_matches_library() {
    let (code, out) = trap(&["schema"]);
    assert_eq!(code, 0);
    assert_eq!(out, trap_harness::scenario::schema());
}

#[test]
fn simulate_writes_a_report() {
    let dir = std::env::temp_dir().join(format!("trap-cli-{}", std::process::id()));
    let (code, out) = trap(&["simulate", "honest_n4", "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("honest_n4/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(dir.join("honest_n4/fifo-0.trace").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn trace_reports_a_mutated_replay() {
    let (code, out) = trap(&["trace", "fig2"]);
    assert_eq!(code, 0, "{out}");
    let (code, out) = trap(&["trace", "fig2", "--mutation", "early-reveal"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("golden/milestones"), "{out}");
}

#[test]
fn sweep_lists_feasible_rows_only() {
    let (code, out) = trap(&["sweep", "--n", "7", "--k", "1", "--t", "1,2", "--seeds", "0..2", "--policies", "fifo", "--json"]);
    assert_eq!(code, 0, "{out}");
    let rows: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["t"], 1);
}
