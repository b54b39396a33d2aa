use thiserror::Error;

use crate::design::Design;

/// Which treatment arm a message refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmLabel {
    Drug,
    Control,
    Joint,
}

impl std::fmt::Display for ArmLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArmLabel::Drug => f.write_str("new drug"),
            ArmLabel::Control => f.write_str("active control"),
            ArmLabel::Joint => f.write_str("joint model"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dose {dose} outside the dose range [{lower}, {upper}]")]
    DoseOutOfRange { dose: f64, lower: f64, upper: f64 },

    #[error("singular information at dose {dose}: {reason}")]
    SingularInformation { dose: f64, reason: String },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contrast is not estimable under the {arm} information matrix")]
    NotEstimable { arm: ArmLabel },

    #[error("no target dose: control response {target} lies outside [{low}, {high}]")]
    NoTargetDose { target: f64, low: f64, high: f64 },

    #[error("mean function is flat at the target dose {dose}")]
    DegenerateGradient { dose: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("efficiency {value} exceeds one; the reference design is not optimal")]
    EfficiencyAboveOne { value: f64 },

    #[error("solver did not converge: residual violation {violation:.3e}")]
    NonConvergence { best: Box<Design>, violation: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
