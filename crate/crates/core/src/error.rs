use thiserror::Error;

/// Errors raised while preparing data, fitting models or writing reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    /// The posterior (and hence the evidence) does not exist for this dataset.
    #[error("posterior existence condition violated: {0}")]
    Existence(String),

    #[error("model {0} is not admissible (design [1 | X_k] is rank deficient)")]
    Inadmissible(String),

    #[error("numerically singular cross-product for model {0}")]
    Singular(String),

    #[error("non-finite value in {term}{}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        term: &'static str,
        iteration: Option<usize>,
    },

    #[error("q(sigma^2) shape a = {0} must exceed 1 to evaluate the inverse-gamma mean")]
    ShapeTooSmall(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn numerical(term: &'static str) -> Self {
        Error::Numerical { term, iteration: None }
    }

    /// Process exit status: 2 usage, 3 data or precondition, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) => 2,
            Error::Data(_)
            | Error::Existence(_)
            | Error::Inadmissible(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Singular(_) | Error::Numerical { .. } | Error::ShapeTooSmall(_) => 4,
        }
    }
}
