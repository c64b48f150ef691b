//! Scenario-driven experiments over simulated feeders, their summary tables and
//! the `feederid` command line.

pub mod cli;
mod run;
mod scenario;
mod seed;
mod summary;

use std::path::PathBuf;

pub use run::{
    aggregate_error_pct, ideal_measurements, noisy_measurements, run_scenario, write_aggregate_csv, write_records_csv,
    ExperimentRecord, LineRecord,
};
pub use scenario::{AlgoSpec, LoadPreset, NetworkSpec, NoisePolicy, Scenario, Shape};
pub use seed::{derive_seed, fresh_noise_seed, loads_seed, noise_seed, STREAM_LOADS, STREAM_NOISE, STREAM_NOISE_FRESH};
pub use summary::{summarize, CondRow, ErrorVsMRow, LineErrorRow, Summary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("incomplete sweep: {0}")]
    IncompleteSweep(String),
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Sim(#[from] simulator::SimError),
    #[error("{context}: {source}")]
    Identify {
        context: String,
        #[source]
        source: identify::IdentifyError,
    },
    #[error(transparent)]
    Dbci(#[from] dbci::DbciError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExpError {
    /// Numerical failures (exit code 3) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            ExpError::Identify { source, .. } => source.is_numerical(),
            ExpError::Sim(simulator::SimError::SingularSystem { .. }) => true,
            ExpError::Dbci(dbci::DbciError::Identify(e)) => e.is_numerical(),
            _ => false,
        }
    }
}
