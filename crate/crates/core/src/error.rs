use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent schedule: {0}")]
    InconsistentSchedule(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The program has no feasible point. `conflicts` names the constraints
    /// carrying the infeasibility certificate.
    #[error("infeasible problem; conflicting constraints: {}", conflicts.join(", "))]
    Infeasible { conflicts: Vec<String> },

    #[error("solver did not converge after {iterations} iterations ({reason})")]
    NonConvergence { iterations: usize, reason: String },

    #[error("nonlinear power flow diverged at interval {t} after {iterations} iterations")]
    OracleDivergence { t: usize, iterations: usize },

    #[error("{}: {msg}", location(file, *row))]
    Load {
        file: PathBuf,
        row: Option<usize>,
        msg: String,
    },

    #[error("failed to write {}: {source}", path.display())]
    Emit {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(file: &std::path::Path, row: Option<usize>) -> String {
    match row {
        Some(r) => format!("{} (row {r})", file.display()),
        None => file.display().to_string(),
    }
}

impl Error {
    pub(crate) fn load(file: impl Into<PathBuf>, row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Load {
            file: file.into(),
            row,
            msg: msg.into(),
        }
    }
}
