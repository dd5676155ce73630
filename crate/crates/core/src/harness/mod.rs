//! Experiment configuration, Monte-Carlo runner, band-optimality validation
//! and selftest.

mod config;
mod experiment;
mod prop2;
mod selftest;

pub use config::{dbm_to_watts, parse_pairs, watts_to_dbm, ExperimentConfig, RateBase, Scenario, SweepVar, System};
pub use experiment::{means, ris_geometry, run, trial_seed, write_csv, Row, CSV_HEADER};
pub use prop2::{validate_prop2, write_prop2_csv, Prop2Row};
pub use selftest::{selftest, Check};
