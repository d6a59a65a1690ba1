use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{axis} size {size} is not divisible by 2^{levels}")]
    DimensionNotDivisible {
        axis: &'static str,
        size: usize,
        levels: usize,
    },
    #[error("decomposition level must be at least 1")]
    ZeroLevels,
    #[error("inconsistent wavelet pyramid: {0}")]
    InconsistentPyramid(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("budget smaller than one generation (total {total}, generation size {generation})")]
    BudgetTooSmall { total: u64, generation: u64 },
    #[error("budget exhausted: requested {requested} evaluations with {remaining} remaining")]
    BudgetExhausted { requested: u64, remaining: u64 },
    #[error("time {t} is outside the integration window [0, {t_end}]")]
    TimeOutOfRange { t: f64, t_end: f64 },
    #[error("integration produced a non-finite state at step {step}")]
    Diverged { step: usize },
    #[error("band ({lo}, {hi}] contains no lattice frequencies")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("grid {height}x{width} is too small for {bands} radial bands")]
    GridTooSmall {
        height: usize,
        width: usize,
        bands: usize,
    },
    #[error("no critical time in (0, 1) for |w| = {omega}")]
    NoCriticalTime { omega: f64 },
    #[error("empty elite set")]
    EmptyElites,
    #[error("config error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("external generator error for request {id}: {message}")]
    External { id: u64, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stdio(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
