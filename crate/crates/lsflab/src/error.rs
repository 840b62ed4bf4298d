use thiserror::Error;

#[derive(Debug, Error)]
pub enum LsfError {
    #[error("node {0:?} too close to the grid boundary for a centered stencil")]
    BoundaryStencil([usize; 3]),

    #[error("degenerate gradient: |grad| = {got:.3e} below threshold {min:.3e}")]
    DegenerateGradient { got: f64, min: f64 },

    #[error("point {0:?} outside the grid box")]
    OutOfDomain([f64; 3]),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LsfError>;
