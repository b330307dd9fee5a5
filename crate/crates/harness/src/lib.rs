//! Scenario files, batch execution, JSON reports, golden replays and the
//! acceptance suite behind the `trap` command.

pub mod acceptance;
pub mod golden;
pub mod params_cmd;
pub mod report;
pub mod scenario;
pub mod sweep;
