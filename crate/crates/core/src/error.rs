use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("degree error: {0}")]
    Degree(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Parse(_) => 2,
            Error::Configuration(_) | Error::Scenario(_) | Error::Shape(_) | Error::State(_) => 3,
            Error::Io(_) | Error::Json(_) => 4,
            Error::Numeric(_) => 5,
            Error::NonConvergence(_) => 6,
            _ => 7,
        }
    }
}
