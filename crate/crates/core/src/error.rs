use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature error estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("function is identically zero")]
    ZeroFunction,

    #[error("nonpositive value {value:.3e} at node {node}")]
    NonPositive { node: usize, value: f64 },

    #[error("singular tridiagonal system at row {row} (pivot {pivot:.3e})")]
    LinearSolve { row: usize, pivot: f64 },

    #[error("lambda increased for {steps} consecutive steps (last value {lambda:.6e})")]
    Divergence { steps: usize, lambda: f64 },

    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    #[error("non-convergent trend: {0}")]
    NonConvergentTrend(String),

    #[error("window radius {window:.3e} exceeds chart radius {r_max:.3e}")]
    WindowExceedsChart { window: f64, r_max: f64 },

    #[error("empty annulus [{0:.3e}, {1:.3e}]")]
    EmptyAnnulus(f64, f64),

    #[error("epsilon {eps:.3e} too large for chart (limit {limit:.3e})")]
    EpsTooLarge { eps: f64, limit: f64 },

    #[error("no bracket for B0 up to B = {0:.3e}")]
    BracketNotFound(f64),

    #[error("every run of the sweep failed: {0}")]
    SweepFailed(String),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
