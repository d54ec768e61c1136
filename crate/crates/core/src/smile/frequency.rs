//! Symmetric frequency grid, half-line spectra and the inverse transform.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::Side;

/// Damping applied to the truncated inverse transform.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralFilter {
    #[default]
    None,
    /// `sinc(π ω / Ω)` factors. Suppresses ringing from the jump in the
    /// second derivative of each half-line solution at the money.
    Lanczos,
}

impl SpectralFilter {
    pub fn factor(self, omega: f64, omega_max: f64) -> f64 {
        match self {
            SpectralFilter::None => 1.0,
            SpectralFilter::Lanczos => {
                let x = PI * omega / omega_max;
                if x == 0.0 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
        }
    }
}

/// Uniform grid `ω_k = k Δω`, `k = -N..=N`, with `N Δω = Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omega_max: f64,
    d_omega: f64,
    half: usize,
    #[serde(default)]
    filter: SpectralFilter,
}

impl FrequencyGrid {
    pub fn new(omega_max: f64, d_omega: f64) -> Result<Self> {
        if !(omega_max.is_finite() && d_omega.is_finite() && omega_max > 0.0 && d_omega > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "frequency grid needs Ω > 0 and Δω > 0, got Ω = {omega_max}, Δω = {d_omega}"
            )));
        }
        let ratio = omega_max / d_omega;
        let half = ratio.round();
        if half < 1.0 || (ratio - half).abs() > 1e-9 * ratio {
            return Err(Error::InvalidGrid(format!(
                "Ω = {omega_max} is not a positive multiple of Δω = {d_omega}"
            )));
        }
        Ok(Self {
            omega_max,
            d_omega,
            half: half as usize,
            filter: SpectralFilter::None,
        })
    }

    pub fn with_filter(self, filter: SpectralFilter) -> Self {
        Self { filter, ..self }
    }

    pub fn filter(&self) -> SpectralFilter {
        self.filter
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn d_omega(&self) -> f64 {
        self.d_omega
    }

    /// Number of nodes, always odd.
    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of nodes with `ω ≥ 0`.
    pub fn nonneg_len(&self) -> usize {
        self.half + 1
    }

    /// Frequency at full-grid index `idx` (index `half` is `ω = 0`).
    pub fn omega(&self, idx: usize) -> f64 {
        (idx as f64 - self.half as f64) * self.d_omega
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.omega(i)).collect()
    }

    pub fn nonneg_omegas(&self) -> Vec<f64> {
        (0..self.nonneg_len())
            .map(|j| j as f64 * self.d_omega)
            .collect()
    }

    /// Full-grid index of the nonnegative node `j`.
    pub fn index_of_nonneg(&self, j: usize) -> usize {
        self.half + j
    }

    /// Trapezoid weight of the full-grid node `idx`, times the filter factor.
    pub fn weight(&self, idx: usize) -> f64 {
        let w = if idx == 0 || idx + 1 == self.len() {
            0.5 * self.d_omega
        } else {
            self.d_omega
        };
        w * self.filter.factor(self.omega(idx), self.omega_max)
    }

    /// Coefficients `a_j` with `u(z) = Re Σ_j a_j U(ω_j)` over `ω_j ≥ 0` for a
    /// Hermitian spectrum.
    pub(crate) fn hermitian_coefficients(&self, z: f64) -> Vec<Complex64> {
        let norm = 1.0 / (2.0 * PI).sqrt();
        (0..self.nonneg_len())
            .map(|j| {
                let w = self.weight(self.index_of_nonneg(j));
                let mult = if j == 0 { 1.0 } else { 2.0 };
                Complex64::cis(j as f64 * self.d_omega * z) * (mult * w * norm)
            })
            .collect()
    }
}

/// Fourier-space solution on one half-line for a fixed `(v, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    pub side: Side,
    pub grid: FrequencyGrid,
    /// Values on the full grid, ordered as [`FrequencyGrid::omegas`].
    pub values: Vec<Complex64>,
    pub std_errors: Vec<f64>,
}

impl SpectralSolution {
    pub fn zeros(side: Side, grid: FrequencyGrid) -> Self {
        Self {
            side,
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            std_errors: vec![0.0; grid.len()],
        }
    }

    /// Extends values on `ω ≥ 0` to the full grid by `U(-ω) = conj U(ω)`.
    pub fn from_nonnegative(
        side: Side,
        grid: FrequencyGrid,
        values: &[Complex64],
        std_errors: &[f64],
    ) -> Self {
        assert_eq!(values.len(), grid.nonneg_len());
        assert_eq!(std_errors.len(), grid.nonneg_len());
        let mut out = Self::zeros(side, grid);
        for j in 0..grid.nonneg_len() {
            let p = grid.index_of_nonneg(j);
            let m = grid.len() - 1 - p;
            out.values[p] = values[j];
            out.std_errors[p] = std_errors[j];
            out.values[m] = values[j].conj();
            out.std_errors[m] = std_errors[j];
        }
        out.values[grid.index_of_nonneg(0)].im = 0.0;
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            side: self.side,
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            std_errors: self.std_errors.iter().map(|s| s * c.abs()).collect(),
        }
    }

    /// `max |U(-ω) - conj U(ω)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.values.len();
        (0..n)
            .map(|i| (self.values[n - 1 - i] - self.values[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `|U|` at `±Ω` relative to `max |U|`.
    pub fn tail_ratio(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        self.values[0].norm().max(self.values[n - 1].norm()) / m
    }

    /// Trapezoid approximation of `(2π)^{-1/2} ∫ e^{iωz} U(ω) dω`.
    pub fn invert_at(&self, z: f64) -> Complex64 {
        let norm = 1.0 / (2.0 * PI).sqrt();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, u) in self.values.iter().enumerate() {
            acc += Complex64::cis(self.grid.omega(i) * z) * u * self.grid.weight(i);
        }
        acc * norm
    }
}

/// How the two half-line solutions are combined into one correction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    /// `u = u_1` on `z < 0`, `u = u_2` on `z > 0`, their mean at `z = 0`.
    #[default]
    HalfLine,
    /// `u = u_1 + u_2` everywhere: the response to the full source.
    WholeLine,
}

impl Reconstruction {
    /// Weights applied to the `[Negative, Positive]` solutions at `z`.
    pub fn side_weights(self, z: f64) -> [f64; 2] {
        match self {
            Reconstruction::WholeLine => [1.0, 1.0],
            Reconstruction::HalfLine if z < 0.0 => [1.0, 0.0],
            Reconstruction::HalfLine if z > 0.0 => [0.0, 1.0],
            Reconstruction::HalfLine => [0.5, 0.5],
        }
    }
}

/// Relative bound on the imaginary part of a reconstructed correction.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// Reconstructs `u(z)` from the two half-line spectra.
///
/// The full complex sum is formed, and an imaginary part above
/// `IMAG_RESIDUE_TOL · max |u|` is reported as a spectral inconsistency.
pub fn reconstruct(
    negative: &SpectralSolution,
    positive: &SpectralSolution,
    zs: &[f64],
    mode: Reconstruction,
) -> Result<Vec<f64>> {
    if negative.side != Side::Negative || positive.side != Side::Positive {
        return Err(Error::InvalidInput(
            "spectra must be ordered (negative, positive)".into(),
        ));
    }
    let mut re = Vec::with_capacity(zs.len());
    let mut residue = 0.0f64;
    for &z in zs {
        let w = mode.side_weights(z);
        let mut u = Complex64::new(0.0, 0.0);
        if w[0] != 0.0 {
            u += negative.invert_at(z) * w[0];
        }
        if w[1] != 0.0 {
            u += positive.invert_at(z) * w[1];
        }
        residue = residue.max(u.im.abs());
        re.push(u.re);
    }
    let scale = re.iter().map(|u| u.abs()).fold(0.0, f64::max);
    if residue > IMAG_RESIDUE_TOL * scale + f64::MIN_POSITIVE {
        return Err(Error::SpectralInconsistency { residue, scale });
    }
    Ok(re)
}

/// Half-line reconstruction of `u` on `zs`.
pub fn inverse_transform(
    negative: &SpectralSolution,
    positive: &SpectralSolution,
    zs: &[f64],
) -> Result<Vec<f64>> {
    reconstruct(negative, positive, zs, Reconstruction::HalfLine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = FrequencyGrid::new(40.0, 0.05).unwrap();
        assert_eq!(g.len(), 1601);
        assert_eq!(g.omega(800), 0.0);
        assert!((g.omega(0) + 40.0).abs() < 1e-12 && (g.omega(1600) - 40.0).abs() < 1e-12);
        let om = g.omegas();
        for i in 0..om.len() {
            assert_eq!(om[i], -om[om.len() - 1 - i]);
        }
        assert!(FrequencyGrid::new(40.0, 0.3).is_err());
        assert!(FrequencyGrid::new(-1.0, 0.1).is_err());
    }

    #[test]
    fn zero_spectrum_gives_zero() {
        let g = FrequencyGrid::new(4.0, 0.5).unwrap();
        let u = inverse_transform(
            &SpectralSolution::zeros(Side::Negative, g),
            &SpectralSolution::zeros(Side::Positive, g),
            &[-1.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(u, vec![0.0; 3]);
    }

    #[test]
    fn gaussian_round_trip() {
        // The transform of exp(-z²/2) is exp(-ω²/2).
        let g = FrequencyGrid::new(12.0, 0.05).unwrap();
        let vals: Vec<Complex64> = g
            .nonneg_omegas()
            .iter()
            .map(|w| Complex64::new((-0.5 * w * w).exp(), 0.0))
            .collect();
        let se = vec![0.0; vals.len()];
        let neg = SpectralSolution::from_nonnegative(Side::Negative, g, &vals, &se);
        let pos = SpectralSolution::from_nonnegative(Side::Positive, g, &vals, &se);
        let zs = [-2.0, -0.5, 0.0, 0.7, 1.5];
        let u = inverse_transform(&neg, &pos, &zs).unwrap();
        for (z, u) in zs.iter().zip(&u) {
            assert!((u - (-0.5 * z * z).exp()).abs() < 1e-12, "{z} {u}");
        }
        let coeff = g.hermitian_coefficients(0.7);
        let fast: f64 = coeff.iter().zip(&vals).map(|(a, v)| (a * v).re).sum();
        assert!((fast - u[3]).abs() < 1e-13);
        assert_eq!(neg.hermitian_defect(), 0.0);
    }

    #[test]
    fn lanczos_factors_taper_to_zero() {
        let g = FrequencyGrid::new(4.0, 0.5)
            .unwrap()
            .with_filter(SpectralFilter::Lanczos);
        assert_eq!(g.weight(8), 0.5);
        assert!(g.weight(0).abs() < 1e-16 && g.weight(16).abs() < 1e-16);
        assert!((g.weight(12) - 0.5 * 2.0 / std::f64::consts::PI).abs() < 1e-15);
        // A smooth spectrum well inside the band is barely changed.
        let g = FrequencyGrid::new(40.0, 0.05).unwrap();
        let vals: Vec<Complex64> = g
            .nonneg_omegas()
            .iter()
            .map(|w| Complex64::new((-0.5 * w * w).exp(), 0.0))
            .collect();
        let se = vec![0.0; vals.len()];
        let plain = SpectralSolution::from_nonnegative(Side::Positive, g, &vals, &se);
        let damped = SpectralSolution::from_nonnegative(
            Side::Positive,
            g.with_filter(SpectralFilter::Lanczos),
            &vals,
            &se,
        );
        assert!((plain.invert_at(0.3).re - damped.invert_at(0.3).re).abs() < 1e-3);
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let g = FrequencyGrid::new(4.0, 0.5).unwrap();
        let mut pos = SpectralSolution::zeros(Side::Positive, g);
        pos.values[12] = Complex64::new(1.0, 0.0);
        let neg = SpectralSolution::zeros(Side::Negative, g);
        let err = inverse_transform(&neg, &pos, &[0.3]);
        assert!(matches!(err, Err(Error::SpectralInconsistency { .. })));
    }

    #[test]
    fn reconstruction_weights() {
        assert_eq!(Reconstruction::HalfLine.side_weights(-0.1), [1.0, 0.0]);
        assert_eq!(Reconstruction::HalfLine.side_weights(0.0), [0.5, 0.5]);
        assert_eq!(Reconstruction::WholeLine.side_weights(3.0), [1.0, 1.0]);
    }
}
