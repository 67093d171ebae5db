use std::path::PathBuf;

use thiserror::Error;

use crate::subset::SubsetMask;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside [0, 1] ({context})")]
    Domain { value: f64, context: &'static str },

    #[error("dimension {0} unsupported (expected 2..={max})", max = crate::subset::MAX_DIM)]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("subset {mask} is not a parameter index for d = {d}")]
    BadSubset { mask: SubsetMask, d: usize },

    #[error("basis order {0} is not 1 or 2")]
    BadOrder(u8),

    #[error("parameter vector violates the validity constraint (excess {excess:.6e})")]
    Invalid { excess: f64 },

    #[error("conditioning prefix has density {density:.3e} at coordinate {index}")]
    SingularPrefix { index: usize, density: f64 },

    #[error("root finder did not converge (residual {residual:.3e})")]
    Convergence { residual: f64 },

    #[error("replication {replication} failed")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("density is {density:.6e} at row {row}")]
    NonPositiveDensity { row: usize, density: f64 },

    #[error("empty data")]
    EmptyData,

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("covariance block is numerically singular (condition {condition:.3e})")]
    Singular { condition: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
