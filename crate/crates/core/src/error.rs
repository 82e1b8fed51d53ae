use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid network: {0}")]
    Network(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("missing variable or key `{0}`")]
    Missing(String),
    #[error("shape mismatch for `{key}`: expected {expected:?}, found {found:?}")]
    Shape { key: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(#[from] opfkit_solver::SolverError),
    #[error("solve failed: {0}")]
    SolveFailed(String),
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn file(path: impl AsRef<std::path::Path>, msg: impl std::fmt::Display) -> Self {
        Error::File { path: path.as_ref().display().to_string(), msg: msg.to_string() }
    }
}
