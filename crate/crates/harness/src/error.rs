use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },

    #[error("grid spec `{spec}`: {reason}")]
    Grid { spec: String, reason: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("slope fit: {0}")]
    Slope(String),

    #[error(transparent)]
    Core(#[from] spdp_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
