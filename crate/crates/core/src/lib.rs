//! Option pricing under a lognormal stochastic variance that is uncorrelated
//! with the stock.
//!
//! The price is written as the Black–Scholes price plus a correction solving a
//! parabolic problem in `(ln(x/K̃), ln v, t)`. The correction is computed by
//! Fourier transform in log-moneyness and Monte Carlo over variance paths,
//! with an independent finite-difference solver as cross-check. The
//! [`market`] module simulates the market and the hedging strategies built
//! from these prices.

pub mod bs;
pub mod checks;
pub mod config;
pub mod error;
pub mod fd;
pub mod interp;
pub mod market;
pub mod simulate;
pub mod smile;
pub mod stats;
pub mod table;
pub mod tridiag;
pub mod volpath;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Half-line in log-moneyness: `Negative` is `z < 0`, `Positive` is `z > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Negative,
    Positive,
}

impl Side {
    pub fn of(z: f64) -> Side {
        if z < 0.0 {
            Side::Negative
        } else {
            Side::Positive
        }
    }

    pub fn contains(self, z: f64) -> bool {
        match self {
            Side::Negative => z <= 0.0,
            Side::Positive => z >= 0.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Negative => 0,
            Side::Positive => 1,
        }
    }
}
