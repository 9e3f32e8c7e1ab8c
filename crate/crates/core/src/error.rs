use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("layout mismatch: expected {expected} values, found {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: operator is {op}, vector has {vec}")]
    DimensionMismatch { op: usize, vec: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("step {step}: picard iteration did not converge in {iterations} sweeps (residual {residual:.3e})")]
    PicardDiverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("initial data not solenoidal: projection residual {0:.3e}")]
    NotSolenoidal(f64),

    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
