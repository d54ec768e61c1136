//! Correction engine: half-line Fourier transforms of the source, Monte Carlo
//! solution in Fourier space, inverse transform, prices and smiles.

mod frequency;
mod montecarlo;
mod pricing;
mod source;

pub use frequency::{
    inverse_transform, reconstruct, FrequencyGrid, Reconstruction, SpectralFilter,
    SpectralSolution, IMAG_RESIDUE_TOL,
};
pub use montecarlo::{compute_u, unit_spectra, KernelConfig, Probe, SourceAlongPaths, UnitSpectra};
pub use pricing::{
    correction_spectra, price, smile, MarketState, NumericsConfig, PriceDiagnostics, PriceResult,
    SmileCurve, SmilePoint,
};
pub use source::{forward_transform, source_transform, TransformConfig, THETA_FLOOR};
