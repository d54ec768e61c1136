//! Half-line Fourier transforms of the source term.
//!
//! With `θ = (T - t) v` the source is `φ = ½σ̂² K̃ s(z, θ)`, so every transform
//! is `½σ̂² K̃ Ŝ_m(ω, θ)` for a strike-free profile `Ŝ_m`. Quadrature runs in
//! `ζ = z / √θ`, where `s √θ = ¼ θ n(ζ - √θ/2) (ζ² - θ/4 - 1)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::frequency::FrequencyGrid;
use crate::bs::{norm_pdf, DiscountedOption};
use crate::error::{Error, Result};
use crate::interp::uniform_lagrange4;
use crate::Side;

/// Below this `θ` the transform is scaled linearly to zero.
pub const THETA_FLOOR: f64 = 1e-9;

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Truncation of the half-line integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    /// Tail cut: integrand below `tail_eps` times its maximum.
    pub tail_eps: f64,
    /// Largest admissible truncation point in `z`.
    pub z_max: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            tail_eps: 1e-12,
            z_max: 60.0,
        }
    }
}

/// Quadrature nodes in `z` with real weights that already include the
/// integrand and the `(2π)^{-1/2}` factor.
pub(crate) struct Quadrature {
    pub z: Vec<f64>,
    pub g: Vec<f64>,
}

fn integrand(zeta: f64, c: f64) -> f64 {
    norm_pdf(zeta - c) * (zeta * zeta - c * c - 1.0)
}

fn envelope(zeta: f64, c: f64) -> f64 {
    norm_pdf(zeta - c) * (zeta * zeta + c * c + 1.0)
}

pub(crate) fn quadrature(
    side: Side,
    theta: f64,
    omega_max: f64,
    cfg: &TransformConfig,
) -> Result<Quadrature> {
    let c = 0.5 * theta.sqrt();
    let sqrt_theta = theta.sqrt();

    let peak = (0..=4000)
        .map(|i| c - 10.0 + i as f64 * 0.005)
        .filter(|&zeta| side.contains(zeta))
        .map(|zeta| integrand(zeta, c).abs())
        .fold(0.0, f64::max);
    let cut = cfg.tail_eps * peak;

    let mut limit = match side {
        Side::Positive => c.max(0.0) + 1.0,
        Side::Negative => c.min(0.0) - 1.0,
    };
    let step = match side {
        Side::Positive => 0.25,
        Side::Negative => -0.25,
    };
    while envelope(limit, c) >= cut {
        limit += step;
        if sqrt_theta * limit.abs() > cfg.z_max {
            return Err(Error::TruncationFailure {
                eps: cfg.tail_eps,
                z_max: cfg.z_max,
            });
        }
    }

    let panel = if omega_max > 0.0 {
        (2.0 / (omega_max * sqrt_theta)).min(0.25)
    } else {
        0.25
    };
    let length = limit.abs();
    let n_panels = (length / panel).ceil().max(1.0) as usize;
    let half = 0.5 * length / n_panels as f64;
    let sign = if side == Side::Positive { 1.0 } else { -1.0 };
    let scale = 0.25 * theta / (2.0 * PI).sqrt();

    let mut q = Quadrature {
        z: Vec::with_capacity(8 * n_panels),
        g: Vec::with_capacity(8 * n_panels),
    };
    for p in 0..n_panels {
        let mid = (2 * p + 1) as f64 * half;
        for (x, w) in GL8_X.iter().zip(GL8_W) {
            for s in [-1.0, 1.0] {
                let zeta = sign * (mid + s * x * half);
                q.z.push(sqrt_theta * zeta);
                q.g.push(scale * w * half * integrand(zeta, c));
            }
        }
    }
    Ok(q)
}

/// `Ŝ_m(ω, θ)` at arbitrary frequencies, by direct summation.
pub fn source_transform(
    side: Side,
    omegas: &[f64],
    theta: f64,
    cfg: &TransformConfig,
) -> Result<Vec<Complex64>> {
    if theta <= 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); omegas.len()]);
    }
    let omega_max = omegas.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let q = quadrature(side, theta, omega_max, cfg)?;
    Ok(omegas
        .iter()
        .map(|&w| {
            q.z.iter()
                .zip(&q.g)
                .map(|(&z, &g)| Complex64::cis(-w * z) * g)
                .sum()
        })
        .collect())
}

/// `Ŝ_m(j Δω, θ)` for `j = 0..n`, by phasor recurrence in `ω`.
pub(crate) fn source_transform_uniform(
    side: Side,
    d_omega: f64,
    n: usize,
    theta: f64,
    cfg: &TransformConfig,
) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if theta <= 0.0 {
        return Ok(out);
    }
    let q = quadrature(side, theta, d_omega * (n - 1) as f64, cfg)?;
    for (&z, &g) in q.z.iter().zip(&q.g) {
        let r = Complex64::cis(-d_omega * z);
        let mut p = Complex64::new(g, 0.0);
        for o in out.iter_mut() {
            *o += p;
            p *= r;
        }
    }
    Ok(out)
}

/// `F_m(ω, v, t)` on the full grid for the option `opt`.
pub fn forward_transform(
    side: Side,
    grid: &FrequencyGrid,
    v: f64,
    t: f64,
    opt: &DiscountedOption,
    sigma_hat: f64,
    cfg: &TransformConfig,
) -> Result<Vec<Complex64>> {
    if !(v > 0.0) {
        return Err(Error::Degenerate("v = 0"));
    }
    if t >= opt.expiry {
        return Err(Error::Degenerate("t = T"));
    }
    let scale = 0.5 * sigma_hat * sigma_hat * opt.k_tilde;
    if scale == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); grid.len()]);
    }
    let theta = (opt.expiry - t) * v;
    let profile = source_transform(side, &grid.omegas(), theta, cfg)?;
    Ok(profile.into_iter().map(|f| f * scale).collect())
}

/// `Ŝ_m(j Δω, θ)` on a uniform grid in `ln θ`, for both sides.
pub(crate) struct SourceTable {
    ln_lo: f64,
    h: f64,
    n_theta: usize,
    width: usize,
    rows: [Vec<Complex64>; 2],
}

impl SourceTable {
    pub fn build(
        d_omega: f64,
        width: usize,
        theta_max: f64,
        per_decade: usize,
        cfg: &TransformConfig,
    ) -> Result<Self> {
        let ln_lo = THETA_FLOOR.ln();
        let h = std::f64::consts::LN_10 / per_decade.max(4) as f64;
        let span = (theta_max.max(THETA_FLOOR).ln() - ln_lo) / h;
        // Two spare nodes on top keep the stencil centred at the largest θ.
        let n_theta = (span.ceil() as usize + 3).max(4);
        let thetas: Vec<f64> = (0..n_theta).map(|i| (ln_lo + i as f64 * h).exp()).collect();
        let mut rows = [Vec::new(), Vec::new()];
        for side in [Side::Negative, Side::Positive] {
            let per: Result<Vec<Vec<Complex64>>> = thetas
                .par_iter()
                .map(|&th| source_transform_uniform(side, d_omega, width, th, cfg))
                .collect();
            rows[side.index()] = per?.concat();
        }
        Ok(Self {
            ln_lo,
            h,
            n_theta,
            width,
            rows,
        })
    }

    /// Stencil start and weights at `θ`, or `None` where the transform is zero.
    #[inline]
    pub fn weights(&self, theta: f64) -> Option<(usize, [f64; 4])> {
        if theta <= 0.0 {
            return None;
        }
        if theta < THETA_FLOOR {
            return Some((0, [theta / THETA_FLOOR, 0.0, 0.0, 0.0]));
        }
        Some(uniform_lagrange4(
            self.ln_lo,
            self.h,
            self.n_theta,
            theta.ln(),
        ))
    }

    /// Rows `s..s+4` of one side.
    #[inline]
    pub fn stencil(&self, side: Side, s: usize) -> [&[Complex64]; 4] {
        let r = &self.rows[side.index()];
        let w = self.width;
        [
            &r[s * w..(s + 1) * w],
            &r[(s + 1) * w..(s + 2) * w],
            &r[(s + 2) * w..(s + 3) * w],
            &r[(s + 3) * w..(s + 4) * w],
        ]
    }

    /// Interpolated `Ŝ_m(j Δω, θ)`.
    pub fn eval(&self, side: Side, theta: f64, j: usize) -> Complex64 {
        match self.weights(theta) {
            None => Complex64::new(0.0, 0.0),
            Some((s, w)) => {
                let rows = self.stencil(side, s);
                (0..4).map(|a| rows[a][j] * w[a]).sum()
            }
        }
    }
}
