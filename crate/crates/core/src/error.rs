use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The covariance matrix does not admit a non-negative risk-neutral
    /// mean reversion under the requested decomposition.
    #[error("infeasible covariance: {0}")]
    Infeasible(String),

    /// Risk-neutral mean reversion is exactly zero, where the ultimate rate
    /// and the long-run means are undefined.
    #[error("boundary: {0}")]
    Boundary(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("sampler stalled: {0}")]
    Stall(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
