use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Mismatched dimensions or a violated precondition between arguments.
    #[error("contract violation: {0}")]
    Contract(String),
    /// An MCMC kernel could not produce a valid update.
    #[error("sampler kernel failure: {0}")]
    Kernel(String),
    #[error("matrix factorization failed: {0}")]
    Factorization(String),
    #[error("gibbs step {step} failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("chain {chain} aborted at sweep {sweep}: {reason}")]
    Chain {
        chain: usize,
        sweep: usize,
        reason: String,
    },
    /// Malformed input data (CSV content, dates, shapes).
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn at_step(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
