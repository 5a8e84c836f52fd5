use thiserror::Error;

use crate::conic::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("conic solver returned {status:?} while {context}")]
    Solver {
        status: SolveStatus,
        context: String,
    },

    #[error("SDP relaxation not rank-one: second/first eigenvalue ratio {ratio:.3e}")]
    RankDeficient { ratio: f64 },

    #[error("channel estimate matrix is rank deficient")]
    RankDeficientChannels,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn solver(status: SolveStatus, context: impl Into<String>) -> Self {
        Error::Solver {
            status,
            context: context.into(),
        }
    }
}
