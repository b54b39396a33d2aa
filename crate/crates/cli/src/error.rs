use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario line {line}, key `{key}`: {message}")]
    Scenario { line: usize, key: String, message: String },

    #[error("{path}: {message}")]
    DesignFile { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] acdesign::Error),

    #[error("{failed} of {total} reproduction cells failed")]
    Reproduction { failed: usize, total: usize },

    #[error("no design given: pass a design file or set `design` in the scenario")]
    MissingDesign,
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for invalid input, 3 for non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use acdesign::Error as E;
        match self {
            CliError::Scenario { .. } | CliError::DesignFile { .. } | CliError::MissingDesign => 2,
            CliError::Model(E::NonConvergence { .. }) => 3,
            CliError::Model(
                E::InvalidParameter(_)
                | E::DoseOutOfRange { .. }
                | E::InvalidDesign(_)
                | E::DimensionMismatch { .. }
                | E::NotEstimable { .. }
                | E::NoTargetDose { .. }
                | E::DegenerateGradient { .. }
                | E::Unsupported(_)
                | E::InfeasibleGeometry(_),
            ) => 2,
            _ => 1,
        }
    }
}
