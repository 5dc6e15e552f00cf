use thiserror::Error;

/// Error type shared by every subsystem.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate an operation's preconditions (empty sets, NaNs,
    /// mismatched counts, out-of-range indices, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The inputs are structurally valid but numerically degenerate,
    /// e.g. coplanar landmarks make the RBF system singular.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// A file or directory could not be read or written.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A JSON document failed to parse or serialize.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A file had the right extension but the wrong contents.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// A checkpoint is missing, truncated, or inconsistent with the config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Configuration file problems (unknown keys, unresolvable paths, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Training aborted (non-finite loss, violated phase ordering, ...).
    #[error("training error: {0}")]
    Training(String),

    /// An output path exists and --overwrite was not given.
    #[error("refusing to overwrite existing output: {0}")]
    WouldClobber(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
