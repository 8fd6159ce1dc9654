use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A factorization or linear solve broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Every optimizer start failed while fitting the surrogate.
    #[error("model fit failed after {starts} start(s): {diagnostics}")]
    FitFailure { starts: usize, diagnostics: String },

    /// Ask/tell calls arrived out of order.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("evaluation budget exhausted ({0} runs)")]
    BudgetExhausted(usize),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("study failed: {0}")]
    Study(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Numerical(_) => "numerical_failure",
            Error::FitFailure { .. } => "fit_failure",
            Error::Protocol(_) => "protocol",
            Error::BudgetExhausted(_) => "budget_exhausted",
            Error::Persistence(_) => "persistence",
            Error::Study(_) => "study_failure",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Persistence(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Persistence(e.to_string())
    }
}
