//! Library side of the `gtdyn` batch driver: config schema, orchestration,
//! bundled scenarios, artifact and chart emission. The binary in
//! `main.rs` is a thin dispatcher over these modules.

pub mod artifacts;
pub mod config;
pub mod plot;
pub mod runner;
pub mod scenarios;
