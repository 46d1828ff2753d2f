use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lambda = {lambda} is numerically in the spectrum (smallest singular value {sigma_min:.3e} below {threshold:.3e})")]
    SpectrumHit {
        lambda: String,
        sigma_min: f64,
        threshold: f64,
    },
    #[error("negative time t = {0}")]
    NegativeTime(f64),
    #[error("time {t} is not a multiple of the grid step {dt}")]
    OffGridTime { t: f64, dt: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("boundary system is rank deficient: {0}")]
    SingularBoundarySystem(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Yosida approximation did not settle: {0}")]
    Divergent(String),
    #[error("too many output gaps: {gaps} of {total} samples")]
    TooManyGaps { gaps: usize, total: usize },
    #[error("Picard iteration did not converge after {iterations} iterations (last difference {last_diff:.3e}, contraction ratio {ratio:.3})")]
    NoConvergence {
        iterations: usize,
        last_diff: f64,
        ratio: f64,
    },
    #[error("every output sample was a gap")]
    DegenerateSample,
    #[error("bad system spec: {0}")]
    BadSpec(String),
    #[error("delay measure: {0}")]
    BadMeasure(String),
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config validation error at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
