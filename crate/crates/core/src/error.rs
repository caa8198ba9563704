use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the supported domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violated an invariant.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical procedure could not reach its accuracy target.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Input data is malformed or degenerate.
    #[error("data error: {0}")]
    Data(String),

    /// Automatic initialization of a fit failed.
    #[error("initialization error: {0}")]
    Initialization(String),

    /// The normal equations of a fit are singular.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Not enough data to carry out the requested analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
