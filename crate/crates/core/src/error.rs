use thiserror::Error;

use crate::cox::CoxFit;
use crate::select::ModelSelection;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error(
        "lasso solver stopped after {} iterations with KKT residual {:.3e}",
        .last.iterations,
        .last.kkt_residual
    )]
    NonConvergence { last: Box<CoxFit> },

    #[error("every level 0..={} failed the Gram invertibility guard", .diagnostics.criterion_values.len().saturating_sub(1))]
    AllGuardsFailed { diagnostics: Box<ModelSelection> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
