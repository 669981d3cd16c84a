use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cannot normalize zero field")]
    ZeroField,
    #[error("grid mismatch between fields")]
    GridMismatch,
    #[error("p out of range (1,3): {0}")]
    ExponentOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no ground-state bracket")]
    NoBracket,
    #[error("shooting failed: {0}")]
    ShootingFailed(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("\u{3a9}* = 0 or undefined: quadratic growth condition violated")]
    SubQuadraticGrowth,
    #[error("minimum not unique at tolerance")]
    MinimumNotUnique,
    #[error("non-finite energy")]
    NonFiniteEnergy,
    #[error("inner solver stalled")]
    InnerSolverStalled,
    #[error("energy unbounded (\u{3a9} \u{2265} \u{3a9}*?)")]
    EnergyUnbounded,
    #[error("grid too small for probe")]
    GridTooSmall,
    #[error("rescale under-resolved: {0}")]
    UnderResolved(String),
    #[error("insufficient converged runs")]
    InsufficientRuns,
    #[error("malformed field dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
