//! Exact steady-state solution of radial feeders, ideal and noisy smart-meter
//! measurements, and the backward/forward phase-increment models.

mod measure;
mod propagate;
mod solve;

pub use measure::{add_noise, measure, read_ground_truth_csv, write_ground_truth_csv, MeasurementSet, NoiseSpec};
pub use propagate::{backward_propagate, backward_snapshot, forward_propagate, Backward, Forward};
pub use solve::{kcl_kvl_residuals, power_flow_check, simulate, solve_snapshot, Snapshot};

use thiserror::Error;

/// Channel indices of the per-node noise streams.
pub const CHANNEL_VOLTAGE: u64 = 0;
pub const CHANNEL_CURRENT: u64 = 1;
pub const CHANNEL_ANGLE: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("singular nodal system at node {node} in snapshot {snapshot}")]
    SingularSystem { node: usize, snapshot: usize },
    #[error("forward propagation needs a chain; node {0} branches")]
    BranchingUnsupported(usize),
    #[error("snapshot {m} out of range ({len} available)")]
    SnapshotOutOfRange { m: usize, len: usize },
    #[error("invalid measurements: {0}")]
    InvalidMeasurements(String),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
}
