//! Experiment configuration, the FL simulation loop and report I/O.

mod config;
mod report;
mod sim;

pub use config::{load_config, parse_config, AdversaryConfig, ExperimentConfig};
pub use report::{
    emit_report, emit_sweep, load_report, load_sweep, summary_json, ExperimentReport, RoundRecord, SeedSummary, Spread,
    SweepReport, CLEAN_ROUNDS_FILE, ROUNDS_FILE, SUMMARY_FILE,
};
pub use sim::{run_experiment, run_seed_sweep, Simulation};
