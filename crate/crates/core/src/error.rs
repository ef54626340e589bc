use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("unknown site {site} (graph has {n_sites} sites)")]
    UnknownSite { site: usize, n_sites: usize },
    #[error("unknown bond {0}")]
    UnknownBond(usize),
    #[error("sites {0} and {1} are not bonded")]
    NotBonded(usize, usize),

    #[error("tensor shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch on label {label}: {left} vs {right}")]
    DimensionMismatch { label: u32, left: usize, right: usize },
    #[error("non-finite tensor entry")]
    NonFinite,
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid contraction path: {0}")]
    InvalidPath(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("contraction too large: intermediate of {size} entries exceeds guard {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("local vector on site {0} is not normalized")]
    NotNormalized(usize),
    #[error("bond weight {value:e} below floor {floor:e} on bond {bond}")]
    LambdaBelowFloor { bond: usize, value: f64, floor: f64 },
    #[error("gauge equilibration did not converge after {sweeps} sweeps (residual {residual:e})")]
    EquilibrationFailed { sweeps: usize, residual: f64 },

    #[error("zero-norm message on bond {0}")]
    ZeroMessage(usize),
    #[error("local BP factor on site {site} has non-positive real part ({value})")]
    NonPositiveFactor { site: usize, value: f64 },
    #[error("vanishing denominator in {0}")]
    ZeroDenominator(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("invalid cluster request: {0}")]
    InvalidCluster(String),
    #[error("sequence too short: {len} values, need at least {need}")]
    SequenceTooShort { len: usize, need: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
