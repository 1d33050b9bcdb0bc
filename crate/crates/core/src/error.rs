use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum StgpError {
    #[error("invalid grid size: {0}")]
    Sizing(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unresolved quadrature: {0}")]
    Quadrature(String),
    #[error("unknown wavenumber ({0}, {1})")]
    UnknownWavenumber(i64, i64),
    #[error("simulation unstable: {0}")]
    Unstable(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StgpError {
    /// True for errors caused by the numbers rather than by the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            StgpError::Numerical(_)
                | StgpError::Quadrature(_)
                | StgpError::Unstable(_)
                | StgpError::Estimation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, StgpError>;
