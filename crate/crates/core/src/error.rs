use thiserror::Error;

/// Errors raised while building curves, solving boundaries, pricing and hedging.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quote grid is empty")]
    EmptyGrid,

    #[error("invalid quote grid: {0}")]
    InvalidQuotes(String),

    #[error("call quotes are not convex near strike {strike} (second difference {excess:e})")]
    NonConvexQuotes { strike: f64, excess: f64 },

    #[error("implied mean {implied} does not match spot {spot}")]
    MeanMismatch { implied: f64, spot: f64 },

    #[error("call quotes never reach zero: the implied law has unbounded support")]
    UnboundedSupport,

    #[error("convex order violated at maturity {maturity} (K = {strike}, excess {excess:e})")]
    ConvexOrderViolation {
        /// One-based index of the later maturity of the offending pair.
        maturity: usize,
        strike: f64,
        excess: f64,
    },

    #[error("invalid marginal system: {0}")]
    InvalidSystem(String),

    #[error("boundary coordinates are not sorted")]
    UnorderedZeta,

    #[error("boundary coordinate {zeta} lies above the barrier {m}")]
    ZetaAboveBarrier { zeta: f64, m: f64 },

    #[error("barrier {m} lies outside the profile range [{lo}, {hi}]")]
    BarrierOutOfRange { m: f64, lo: f64, hi: f64 },

    #[error("invalid barrier grid: {0}")]
    InvalidGrid(String),

    #[error("while solving the boundary at m = {m}: {source}")]
    AtBarrier { m: f64, source: Box<Error> },

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("payoff cap {cap} exceeds the profile maximum {grid_max}")]
    CapExceedsProfile { cap: f64, grid_max: f64 },

    #[error("boundary touches the barrier at m = {m} on maturity {maturity}; holdings are undefined")]
    DegenerateBoundary { m: f64, maturity: usize },

    #[error("invalid path skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("path truncated after {steps} steps")]
    Truncated { steps: u64 },

    #[error("{truncated} of {total} paths were truncated")]
    TooManyTruncated { truncated: usize, total: usize },

    #[error("x = {x} lies outside the support [{lo}, {hi})")]
    OutOfSupport { x: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
