//! Line-impedance identification from smart-meter data: the LBCI, LBCI-old
//! and BCI line solvers, their X/R and regularized forms, and chain/tree
//! orchestration with current propagation and phase matching.

mod line;
mod tree;

pub use line::{
    apply_xr, bci_line, cost_full, cost_full_unsigned, estimate_line, lbci_line, lbci_old_line, phase_increments,
    regularization_penalty, LineEstimate, LineProblem, XrReduced,
};
pub use tree::{
    chain_contribution, identify_chain, identify_tree, identify_tree_with, merge_at_node, ChildLine, LineResult,
    NetworkEstimate,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "lbci")]
    Lbci,
    #[serde(rename = "lbci-old")]
    LbciOld,
    #[serde(rename = "bci")]
    Bci,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Lbci => "lbci",
            Variant::LbciOld => "lbci-old",
            Variant::Bci => "bci",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = IdentifyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lbci" => Ok(Variant::Lbci),
            "lbci-old" => Ok(Variant::LbciOld),
            "bci" => Ok(Variant::Bci),
            other => Err(IdentifyError::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

/// Which matrix `D` the penalty `mu ||D z||^2` uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    /// `D = J Q2`, penalising the imaginary part of `j z`.
    Q2Image,
    /// `D = [k, -1]`, penalising deviation of `X / R` from `k`.
    XrRow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub mu: f64,
    pub kind: RegKind,
}

impl Regularizer {
    pub const DEFAULT_MU: f64 = 0.1;

    /// `mu = 0.1` with the X/R row when a ratio is known, `J Q2` otherwise.
    pub fn default_for(xr_ratio: Option<f64>) -> Self {
        let kind = xr_ratio.map_or(RegKind::Q2Image, RegKind::XrRow);
        Regularizer { mu: Self::DEFAULT_MU, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    pub variant: Variant,
    /// Known reactance-to-resistance ratio; reduces the line to one unknown.
    pub xr_ratio: Option<f64>,
    pub reg: Option<Regularizer>,
    pub alpha: f64,
    pub eps: f64,
    pub max_iters: usize,
    /// Clamp `1 - (JQ2 z)^2 / v^2` at zero instead of failing.
    pub clamp_domain: bool,
    /// Treat an exhausted BCI iteration as an error.
    pub require_convergence: bool,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            variant: Variant::Bci,
            xr_ratio: None,
            reg: None,
            alpha: 0.1,
            eps: 1e-8,
            max_iters: 200,
            clamp_domain: true,
            require_convergence: false,
        }
    }
}

impl AlgoConfig {
    pub fn new(variant: Variant) -> Self {
        AlgoConfig { variant, ..Default::default() }
    }

    pub fn with_xr(self, k: f64) -> Self {
        AlgoConfig { xr_ratio: Some(k), ..self }
    }

    pub fn with_iters(self, max_iters: usize, eps: f64) -> Self {
        AlgoConfig { max_iters, eps, ..self }
    }

    pub fn with_reg(self, reg: Regularizer) -> Self {
        AlgoConfig { reg: Some(reg), ..self }
    }

    pub fn validate(&self) -> Result<(), IdentifyError> {
        let bad = |s: String| Err(IdentifyError::InvalidConfig(s));
        if let Some(k) = self.xr_ratio {
            if !(k.is_finite() && k > 0.0) {
                return bad(format!("xr_ratio must be positive, got {k}"));
            }
        }
        if let Some(r) = self.reg {
            if !(0.0..=1.0).contains(&r.mu) {
                return bad(format!("mu must lie in [0, 1], got {}", r.mu));
            }
            if let RegKind::XrRow(k) = r.kind {
                if !k.is_finite() {
                    return bad("X/R row needs a finite ratio".into());
                }
            }
        }
        if self.variant == Variant::Bci {
            if !(self.alpha > 0.0 && self.alpha < 1.0) {
                return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
            }
            if !(self.eps >= 0.0) || self.max_iters == 0 {
                return bad("eps must be >= 0 and max_iters >= 1".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error("current matrix is rank deficient (zero, constant-phase or collinear current snapshots)")]
    RankDeficient,
    #[error("X/R-combined current column vanishes")]
    ZeroColumn,
    #[error("inconsistent snapshot lengths: {0}")]
    InconsistentSnapshotLengths(String),
    #[error("square-root argument negative at iteration {iteration}, snapshot {row}")]
    DomainViolation { iteration: usize, row: usize },
    #[error("BCI did not converge in {iterations} iterations (gap {gap:e})")]
    ConvergenceNotReached { iterations: usize, gap: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid line problem: {0}")]
    InvalidProblem(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("line ({from}, {to}): {source}")]
    Line {
        from: usize,
        to: usize,
        #[source]
        source: Box<IdentifyError>,
    },
}

impl IdentifyError {
    /// The innermost error, skipping line context.
    pub fn root(&self) -> &IdentifyError {
        match self {
            IdentifyError::Line { source, .. } => source.root(),
            e => e,
        }
    }

    /// Whether the failure is numerical (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            IdentifyError::RankDeficient
                | IdentifyError::ZeroColumn
                | IdentifyError::DomainViolation { .. }
                | IdentifyError::ConvergenceNotReached { .. }
        )
    }
}

impl From<phasor_core::PhasorError> for IdentifyError {
    fn from(e: phasor_core::PhasorError) -> Self {
        match e {
            phasor_core::PhasorError::RankDeficient { .. } => IdentifyError::RankDeficient,
            other => IdentifyError::InvalidProblem(other.to_string()),
        }
    }
}

impl From<fixedpoint::FixedPointError> for IdentifyError {
    fn from(e: fixedpoint::FixedPointError) -> Self {
        use fixedpoint::FixedPointError as F;
        match e {
            F::RankDeficient { .. } => IdentifyError::RankDeficient,
            F::DomainViolation { iteration, row } => IdentifyError::DomainViolation { iteration, row },
            F::ConvergenceNotReached { iterations, gap } => IdentifyError::ConvergenceNotReached { iterations, gap },
            other => IdentifyError::InvalidConfig(other.to_string()),
        }
    }
}
