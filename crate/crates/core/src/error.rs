use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamlError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("search space too large: {0} deterministic joint policies")]
    SearchSpaceTooLarge(u128),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HamlError>;

impl HamlError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HamlError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
