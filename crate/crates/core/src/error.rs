use thiserror::Error;

/// Errors raised anywhere in the pricing, simulation and oracle stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Time to expiry or variance is zero; the caller should use the payoff limit.
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Price lies outside the no-static-arbitrage band.
    #[error("no implied variance exists: {0}")]
    NoSolution(String),

    #[error(
        "root finder did not converge after {iterations} iterations, bracket [{lo:e}, {hi:e}]"
    )]
    NotConverged { iterations: usize, lo: f64, hi: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A Feynman-Kac exponent with positive real part would blow up.
    #[error("exponential functional unstable: Re(lambda) = {0} > 0")]
    UnstableFunctional(f64),

    #[error("source tail above {eps:e} at |z| = {z_max}; increase the truncation bound")]
    TruncationFailure { eps: f64, z_max: f64 },

    #[error("reconstructed correction has imaginary residue {residue:e} (scale {scale:e})")]
    SpectralInconsistency { residue: f64, scale: f64 },

    #[error("grid failure: {0}")]
    GridFailure(String),

    #[error("point outside table: {axis} = {value} not in [{lo}, {hi}]")]
    OutOfGrid {
        axis: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Too many steps had a vanishing variance sensitivity to hedge with.
    #[error("{skipped} of {total} steps skipped for a vanishing sensitivity")]
    TooManySkips { skipped: usize, total: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
