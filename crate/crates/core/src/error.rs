use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid grid, flow or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A support field left the admissible cone where the operation needs it.
    #[error("convexity fault: {0}")]
    Convexity(String),

    /// The stationary equation has no solution for the given data.
    #[error("unsolvable: {0}")]
    Unsolvable(String),

    /// An iterative method ran out of iterations.
    #[error("no convergence in {what} after {iterations} iterations: {detail}")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        detail: String,
        /// Best iterate, when one is meaningful.
        last: Option<Vec<f64>>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
            Error::Domain(_) | Error::Convexity(_) | Error::Unsolvable(_) => 3,
            Error::NonConvergence { .. } => 4,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Convexity(_) => "convexity",
            Error::Unsolvable(_) => "unsolvable",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
