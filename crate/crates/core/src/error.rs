use thiserror::Error;

/// Errors raised across the simulator and the analytic predictors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("AMP diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
