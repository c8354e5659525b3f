//! Experiment orchestration for the power-control crates: JSON
//! configuration in, CSV and JSON artifacts out.
//!
//! Four commands share one configuration format. `solve` runs the
//! allocator once and reports powers and optimality residuals; `simulate`
//! runs the flow-level process for each seed; `sweep` maps an
//! arrival-rate ray to an empirical stability boundary, optionally for a
//! second policy side by side; `verify` replays the oracle batteries and
//! exits nonzero when anything fails.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 runtime failure (solver
//! non-convergence, simulation, or artifact IO), 4 verification failure.

use std::path::Path;

use thiserror::Error;

pub mod artifacts;
pub mod config;
pub mod runner;
pub mod scenario;

pub use artifacts::{config_sha256, emit_plot_data, CsvDoc};
pub use config::{
    load_config, validate, BuiltScenario, CommandKind, ExperimentConfig, LocationConfig,
    PhyConfig, ScenarioConfig, SweepSection,
};
pub use runner::{run, Invocation, RunOutput};
pub use scenario::{nats_to_bits, paper_sec5, PAPER_SEC5_NAME};

#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration failed to parse or validate; the message names
    /// the offending field.
    #[error("config: {0}")]
    Config(String),
    /// A run failed after validation: solver non-convergence, a simulation
    /// error, or artifact IO.
    #[error("run: {0}")]
    Runtime(String),
    /// Plot emission was asked for an empty sweep table.
    #[error("empty sweep table")]
    EmptyTable,
    /// One or more verification checks failed.
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::EmptyTable => 3,
            CliError::VerifyFailed(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }
}
