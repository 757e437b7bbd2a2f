use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: spec/validation problems exit
/// with 2, verification mismatches with 3, and capability degradations
/// (missing counters, no MSR access) with 4.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("table `{table}` has no column `{column}`")]
    MissingColumn { table: String, column: String },

    #[error("length mismatch: {context} ({left} vs {right})")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("aggregate would overflow i64: {0}")]
    Overflow(String),

    #[error("capability unavailable: {0}")]
    Capability(String),

    #[error("verification mismatch for {query}: engine={engine} oracle={oracle}")]
    Verification {
        query: String,
        engine: String,
        oracle: String,
    },

    #[error("malformed config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    /// Exit code this error maps to at the CLI boundary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification { .. } => 3,
            Error::Capability(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
