use std::path::PathBuf;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("infeasible model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate routing row {0}")]
    DegenerateRow(usize),

    #[error("row {row} of {source_name} sums to {sum}, expected {expected}")]
    Conservation {
        source_name: String,
        row: usize,
        sum: f64,
        expected: f64,
    },

    #[error("trace grids differ: {0}")]
    GridMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub(crate) fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension { what, got, expected })
    }
}
