//! One line per acceptance criterion; exits non-zero if any fails.

use std::process::ExitCode;

use trap_harness::acceptance::{run_all, Fixture};

fn main() -> ExitCode {
    // `cargo test -- <filter>` style arguments select criteria by number.
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let results = run_all(&Fixture::default(), &only, |r| println!("{r}"));
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("acceptance: {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
