//! Experiment harness for the channel-management library.
//!
//! The harness wraps the core simulator and trainers behind three kinds of
//! commands: single training/evaluation runs driven by JSON configs,
//! scenario reproductions that sweep grids of random graphs and emit CSV
//! tables, and verification drivers (gradient, equivariance, decentralized
//! agreement, interference oracle) whose pass/fail feeds the exit code.
//!
//! All artifacts are deterministic given the spec and seeds; wall-clock
//! timings are segregated into a sidecar file so records and tables are
//! byte-reproducible.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod output;
