use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("distribution needs at least 2 symbols, got {0}")]
    TooFewSymbols(usize),
    #[error("entry {index} is not strictly positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("weights sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("symbol {symbol} out of range for alphabet of size {k}")]
    SymbolOutOfRange { symbol: usize, k: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid alpha {alpha} for {family}")]
    InvalidAlpha { alpha: f64, family: &'static str },
    #[error("generic f-divergence rejected: {0}")]
    InvalidGenerator(String),
    #[error("null and alternative distributions coincide")]
    EqualDistributions,
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("probability must lie in (0, 1), got {0}")]
    ProbOutOfRange(f64),
    #[error("margin {margin} leaves no room below eps {eps}")]
    MarginTooLarge { eps: f64, margin: f64 },
    #[error("enumeration of {types} types exceeds budget {budget}")]
    BudgetExceeded { types: f64, budget: f64 },
    #[error("sqrt(r_tilde) = {sqrt_r} violates the bound sqrt(V)/tau = {limit}")]
    RadiusTooLarge { sqrt_r: f64, limit: f64 },
    #[error("n = {n} is too small for the rounding construction; need n >= {min_n}")]
    NTooSmall { n: u64, min_n: u64 },
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
