use thiserror::Error;

use crate::density::Density;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0} (1 to 3 axes supported)")]
    UnsupportedDimension(usize),

    #[error("axis {axis} has {n} cells; at least 2 are required")]
    TooFewCells { axis: usize, n: usize },

    #[error("degenerate box on axis {axis}: lower {lower} must be below upper {upper}")]
    DegenerateBox { axis: usize, lower: f64, upper: f64 },

    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("cell {cell} has negative average {value}")]
    NegativeCellAverage { cell: usize, value: f64 },

    #[error("density has zero mass")]
    ZeroMass,

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("xi = {0} is outside [0, 1)")]
    XiOutOfRange(f64),

    #[error("time step {dt} violates the CFL condition at cell {cell} (diagonal {diagonal})")]
    CflViolation { dt: f64, cell: usize, diagonal: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Box<Density>,
    },

    #[error("operator is not mass conserving; stationary distributions need a stochastic matrix")]
    NotMassConserving,

    #[error("cannot move filter backwards from t = {from} to t = {to}")]
    TimeRegression { from: f64, to: f64 },

    #[error("observation at t = {t} has zero evidence under the current posterior")]
    ZeroEvidence { t: f64 },

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
