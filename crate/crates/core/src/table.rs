//! Precomputed correction surfaces for fast repeated pricing.
//!
//! A [`CorrectionTable`] stores the strike-free correction `û(z, y, t)` with
//! `u = ½σ̂²K̃ û`, so one table prices every strike of one expiry.

use serde::{Deserialize, Serialize};

use crate::bs::source_profile;
use crate::bs::{bs_delta, bs_price, bs_vega_v, DiscountedOption, Moneyness};
use crate::error::{Error, Result};
use crate::fd::{solve_bvp, Axis, Domain, FdGrids, GridFunction};
use crate::interp::{lagrange4, lagrange4_deriv, stencil_start};
use crate::smile::{
    correction_spectra, reconstruct, NumericsConfig, Reconstruction, SpectralFilter,
};
use crate::Side;

/// Lattice for a table built with the correction engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSpec {
    pub z_lo: f64,
    pub z_hi: f64,
    pub nz: usize,
    pub y_lo: f64,
    pub y_hi: f64,
    pub ny: usize,
    /// Intervals in `t`; nodes cluster quadratically towards expiry.
    pub t_intervals: usize,
    pub t_start: f64,
    /// Replaces the engine's filter while the table is built.
    pub spectral_filter: SpectralFilter,
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            z_lo: -2.5,
            z_hi: 2.5,
            nz: 501,
            y_lo: 0.002f64.ln(),
            y_hi: 1f64.ln(),
            ny: 17,
            t_intervals: 15,
            t_start: 0.0,
            spectral_filter: SpectralFilter::Lanczos,
        }
    }
}

impl TableSpec {
    pub fn t_nodes(&self, expiry: f64) -> Vec<f64> {
        let n = self.t_intervals as f64;
        let mut t: Vec<f64> = (0..=self.t_intervals)
            .map(|k| {
                let s = 1.0 - k as f64 / n;
                self.t_start + (expiry - self.t_start) * (1.0 - s * s)
            })
            .collect();
        *t.last_mut().unwrap() = expiry;
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTable {
    pub expiry: f64,
    pub sigma_hat: f64,
    pub reconstruction: Reconstruction,
    grid: GridFunction,
    zero_index: Option<usize>,
}

/// Discounted price with its spot and variance sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub price: f64,
    pub delta: f64,
    pub vega: f64,
}

impl CorrectionTable {
    /// Wraps a unit-correction surface. For half-line tables `z = 0` must be
    /// a node and interpolation never mixes the two sides.
    pub fn from_grid_function(
        grid: GridFunction,
        expiry: f64,
        sigma_hat: f64,
        reconstruction: Reconstruction,
    ) -> Result<Self> {
        let (nt, ny, nz) = grid.dims();
        if nt < 4 || ny < 4 || nz < 4 {
            return Err(Error::InvalidGrid(
                "table needs at least four nodes per axis".into(),
            ));
        }
        if (grid.t.last().unwrap() - expiry).abs() > 1e-12 {
            return Err(Error::InvalidGrid("table must end at expiry".into()));
        }
        let zero_index = grid.z.iter().position(|&z| z == 0.0);
        if reconstruction == Reconstruction::HalfLine {
            let i0 = zero_index
                .ok_or_else(|| Error::InvalidGrid("half-line table needs a z = 0 node".into()))?;
            if i0 < 3 || nz - i0 < 4 {
                return Err(Error::InvalidGrid(
                    "need four z nodes on each side of z = 0".into(),
                ));
            }
        }
        Ok(Self {
            expiry,
            sigma_hat,
            reconstruction,
            grid,
            zero_index,
        })
    }

    /// Builds the table by running the correction engine at every `(y, t)`
    /// node with a common seed, so the surface is smooth in `(y, t)`.
    pub fn from_smile_engine(
        spec: &TableSpec,
        expiry: f64,
        sigma_hat: f64,
        numerics: &NumericsConfig,
    ) -> Result<Self> {
        let mut z = Axis::new(spec.z_lo, spec.z_hi, spec.nz)?.nodes();
        // Snap the node nearest the money to zero.
        if let Some(i) = z
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
        {
            if z[i].abs() < 1e-9 * (spec.z_hi - spec.z_lo) {
                z[i] = 0.0;
            }
        }
        let y = Axis::new(spec.y_lo, spec.y_hi, spec.ny)?.nodes();
        let t = spec.t_nodes(expiry);
        let mode = numerics.reconstruction;
        let numerics = &NumericsConfig {
            spectral_filter: spec.spectral_filter,
            ..numerics.clone()
        };
        let mut values = Vec::with_capacity(z.len() * y.len() * t.len());
        for &tk in &t {
            for &yj in &y {
                match correction_spectra(expiry, yj.exp(), tk, sigma_hat, numerics, &[])? {
                    None => values.extend(std::iter::repeat_n(0.0, z.len())),
                    Some(sp) => values.extend(reconstruct(&sp.negative, &sp.positive, &z, mode)?),
                }
            }
        }
        let grid = GridFunction::new(z, y, t, values)?;
        Self::from_grid_function(grid, expiry, sigma_hat, mode)
    }

    /// Builds the table from finite-difference solves, restricted to
    /// `|z| <= z_window`. The half-line surface takes each side from the
    /// solve forced by that side's source alone.
    pub fn from_fd(
        grids: &FdGrids,
        expiry: f64,
        sigma_hat: f64,
        reconstruction: Reconstruction,
        z_window: f64,
    ) -> Result<Self> {
        let src = |z: f64, y: f64, t: f64| -source_profile(z, (expiry - t) * y.exp());
        let whole = match reconstruction {
            Reconstruction::WholeLine => {
                solve_bvp(Domain::WholeLine, src, sigma_hat, expiry, grids)?
            }
            Reconstruction::HalfLine => {
                let neg = solve_bvp(
                    Domain::ExtendByZero(Side::Negative),
                    src,
                    sigma_hat,
                    expiry,
                    grids,
                )?;
                let pos = solve_bvp(
                    Domain::ExtendByZero(Side::Positive),
                    src,
                    sigma_hat,
                    expiry,
                    grids,
                )?;
                let (nt, ny, nz) = neg.dims();
                let mut values = Vec::with_capacity(nt * ny * nz);
                for k in 0..nt {
                    for j in 0..ny {
                        values.extend(neg.z.iter().enumerate().map(|(i, &z)| match z {
                            z if z < 0.0 => neg.get(k, j, i),
                            z if z > 0.0 => pos.get(k, j, i),
                            _ => 0.5 * (neg.get(k, j, i) + pos.get(k, j, i)),
                        }));
                    }
                }
                GridFunction::new(neg.z.clone(), neg.y.clone(), neg.t.clone(), values)?
            }
        };
        Self::from_grid_function(
            whole.restrict_z(-z_window, z_window)?,
            expiry,
            sigma_hat,
            reconstruction,
        )
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }

    fn z_stencil(&self, z: f64) -> (usize, [f64; 4], [f64; 4]) {
        let nodes = &self.grid.z;
        let (lo, hi) = match (self.reconstruction, self.zero_index) {
            (Reconstruction::HalfLine, Some(i0)) if z < 0.0 => (0, i0 + 1),
            (Reconstruction::HalfLine, Some(i0)) => (i0, nodes.len()),
            _ => (0, nodes.len()),
        };
        let sub = &nodes[lo..hi];
        let s = stencil_start(sub, z);
        (lo + s, lagrange4(sub, s, z), lagrange4_deriv(sub, s, z))
    }

    /// `(û, ∂û/∂z, ∂û/∂y)` at `(z, y, t)`.
    pub fn unit(&self, z: f64, y: f64, t: f64) -> Result<(f64, f64, f64)> {
        let g = &self.grid;
        for (axis, x, nodes) in [("z", z, &g.z), ("y", y, &g.y), ("t", t, &g.t)] {
            let (lo, hi) = (nodes[0], *nodes.last().unwrap());
            if !(x >= lo && x <= hi) {
                return Err(Error::OutOfGrid {
                    axis,
                    value: x,
                    lo,
                    hi,
                });
            }
        }
        let (si, wz, dz) = self.z_stencil(z);
        let sj = stencil_start(&g.y, y);
        let wy = lagrange4(&g.y, sj, y);
        let dy = lagrange4_deriv(&g.y, sj, y);
        let sk = stencil_start(&g.t, t);
        let wt = lagrange4(&g.t, sk, t);
        let (mut u, mut uz, mut uy) = (0.0, 0.0, 0.0);
        for (c, &w_t) in wt.iter().enumerate() {
            for b in 0..4 {
                for a in 0..4 {
                    let val = w_t * g.get(sk + c, sj + b, si + a);
                    u += wz[a] * wy[b] * val;
                    uz += dz[a] * wy[b] * val;
                    uy += wz[a] * dy[b] * val;
                }
            }
        }
        Ok((u, uz, uy))
    }

    /// Price and sensitivities of `opt` at discounted spot `x`.
    pub fn quote(&self, x: f64, v: f64, t: f64, opt: &DiscountedOption) -> Result<Quote> {
        if (opt.expiry - self.expiry).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "option expiry differs from table expiry".into(),
            ));
        }
        let m = Moneyness::from_spot(x, opt.k_tilde, v, t);
        let base = bs_quote(&m, opt);
        if t >= opt.expiry {
            return Ok(base);
        }
        let c = 0.5 * self.sigma_hat * self.sigma_hat * opt.k_tilde;
        if c == 0.0 {
            return Ok(base);
        }
        let (u, uz, uy) = self.unit(m.z, v.ln(), t)?;
        Ok(Quote {
            price: base.price + c * u,
            delta: base.delta + c * uz / x,
            vega: base.vega + c * uy / v,
        })
    }
}

pub(crate) fn bs_quote(m: &Moneyness, opt: &DiscountedOption) -> Quote {
    if m.t >= opt.expiry {
        let itm = match opt.kind {
            crate::bs::OptionKind::Call => m.x > opt.k_tilde,
            crate::bs::OptionKind::Put => m.x < opt.k_tilde,
        };
        let delta = match (opt.kind, itm) {
            (_, false) => 0.0,
            (crate::bs::OptionKind::Call, true) => 1.0,
            (crate::bs::OptionKind::Put, true) => -1.0,
        };
        return Quote {
            price: bs_price(m, opt),
            delta,
            vega: 0.0,
        };
    }
    Quote {
        price: bs_price(m, opt),
        delta: bs_delta(m, opt),
        vega: bs_vega_v(m, opt),
    }
}
