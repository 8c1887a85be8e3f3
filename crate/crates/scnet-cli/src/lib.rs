//! Scenario-driven front end: config parsing, workflow drivers, and report
//! writers for the `scnet` equilibrium solver.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;
