//! Complex phasor vectors and the small real least-squares kernels used by
//! every line estimator.
//!
//! Line problems always have two real unknowns (resistance and reactance) and
//! `M` rows, one per snapshot, so matrices are stored column-wise as
//! [`TwoCol`] rather than as a general dense type.

mod cvec;
mod lstsq;

pub use cvec::{from_polar, CVec};
pub use lstsq::{condition_number, lstsq_2col, regularized_lstsq, singular_values, TwoCol};

pub use num_complex::Complex64 as Complex;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhasorError {
    #[error("rank-deficient system: singular values {sigma_max:e} / {sigma_min:e}")]
    RankDeficient { sigma_max: f64, sigma_min: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty system")]
    Empty,
    #[error("regularization weight must be finite and non-negative, got {0}")]
    InvalidWeight(f64),
}

/// Relative singular-value threshold below which a system counts as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Gram-matrix condition number above which the normal equations are abandoned
/// in favour of the rotation-based SVD route.
pub const NORMAL_EQ_COND_LIMIT: f64 = 1e8;
