use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("{0} design matrix is rank deficient")]
    RankDeficient(String),

    #[error("quasi-complete separation in the disease model")]
    Separation,

    #[error("{stage} did not converge within {iterations} iterations")]
    NonConvergence { stage: String, iterations: usize },

    #[error("singular Jacobian in {0}")]
    SingularJacobian(String),

    #[error("{stage}: matrix condition number {condition:.3e} exceeds {limit:.0e}")]
    IllConditioned {
        stage: String,
        condition: f64,
        limit: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("non-positive conditional variance for observation {0}")]
    DegenerateVariance(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
