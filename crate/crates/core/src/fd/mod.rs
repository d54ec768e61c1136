//! Finite-difference oracle in `(z, y = ln v, t)`.
//!
//! [`solve_bvp`] integrates `G_t + (v/2)(G_zz - G_z) + (σ̂²/2)(G_yy - G_y) = f`
//! backward from `G(T) = 0` with Peaceman–Rachford splitting;
//! [`solve_parab_u`] does the same for one Fourier mode in `y` alone, and
//! [`residual`] evaluates the continuous operator on any stored surface.

mod grid;
mod io;

pub use grid::{Axis, GridFunction};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tridiag::{self, Scalar};
use crate::Side;

/// Computational domain in `z` and the condition imposed at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Half-line `[-Z, 0]` or `[0, Z]` with `G = 0` at `z = 0`.
    Dirichlet(Side),
    /// Whole line `[-Z, Z]` with the source set to zero off the given side
    /// (half weight at `z = 0`).
    ExtendByZero(Side),
    /// Whole line `[-Z, Z]` with the full source.
    WholeLine,
}

impl Domain {
    fn z_range(self, z_extent: f64) -> (f64, f64) {
        match self {
            Domain::Dirichlet(Side::Negative) => (-z_extent, 0.0),
            Domain::Dirichlet(Side::Positive) => (0.0, z_extent),
            _ => (-z_extent, z_extent),
        }
    }

    fn mask(self, z: f64) -> f64 {
        match self {
            Domain::ExtendByZero(_) if z == 0.0 => 0.5,
            Domain::ExtendByZero(side) if side.contains(z) => 1.0,
            Domain::ExtendByZero(_) => 0.0,
            _ => 1.0,
        }
    }
}

/// Grid sizes for the two-dimensional solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdGrids {
    /// Far-field truncation `Z`.
    pub z_extent: f64,
    /// Nodes on `[0, Z]`; whole-line domains use `2 nz - 1`.
    pub nz: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    /// Time steps on `[t0, T]`.
    pub nt: usize,
    /// Start of the time grid.
    pub t0: f64,
    /// Number of stored time layers, spread evenly and including `t0` and `T`.
    pub stored_layers: usize,
}

impl Default for FdGrids {
    fn default() -> Self {
        Self {
            z_extent: 6.0,
            nz: 257,
            y_min: 1e-4f64.ln(),
            y_max: 4f64.ln(),
            ny: 257,
            nt: 512,
            t0: 0.0,
            stored_layers: 2,
        }
    }
}

impl FdGrids {
    fn validate(&self, expiry: f64) -> Result<()> {
        if self.nz < 3 || self.ny < 3 || self.nt < 1 {
            return Err(Error::InvalidGrid("need nz, ny >= 3 and nt >= 1".into()));
        }
        if !(self.z_extent > 0.0 && self.y_max > self.y_min && expiry > self.t0) {
            return Err(Error::InvalidGrid("empty z, y or t range".into()));
        }
        if self.stored_layers < 2
            || self.stored_layers > self.nt + 1
            || !self.nt.is_multiple_of(self.stored_layers - 1)
        {
            return Err(Error::InvalidGrid(format!(
                "stored_layers - 1 = {} must divide nt = {}",
                self.stored_layers.saturating_sub(1),
                self.nt
            )));
        }
        Ok(())
    }
}

/// Coefficients of `c (w_{i-1}(1/h² + 1/2h) - 2 w_i/h² + w_{i+1}(1/h² - 1/2h))`,
/// the central form of `c (∂² - ∂)`.
#[inline]
fn stencil(c: f64, h: f64) -> (f64, f64, f64) {
    let a = 1.0 / (h * h);
    let b = 0.5 / h;
    (c * (a + b), -2.0 * c * a, c * (a - b))
}

/// Rejects implicit systems that are not diagonally dominant, which on these
/// grids means the mesh Peclet number is too large.
fn check_dominance<T: Scalar>(lower: &[T], diag: &[T], upper: &[T]) -> Result<()> {
    let n = diag.len();
    for i in 0..n {
        let off = if i > 0 { lower[i].magnitude() } else { 0.0 }
            + if i + 1 < n { upper[i].magnitude() } else { 0.0 };
        if diag[i].magnitude() <= off {
            return Err(Error::GridFailure(format!(
                "implicit system not diagonally dominant at row {i}: |diag| = {:.3e}, off-diagonal = {off:.3e}",
                diag[i].magnitude()
            )));
        }
    }
    Ok(())
}

/// Backward solve of `G_t + A G = source` with `G(T) = 0` and zero Dirichlet
/// data on the domain boundary.
pub fn solve_bvp<F>(
    domain: Domain,
    source: F,
    sigma_hat: f64,
    expiry: f64,
    grids: &FdGrids,
) -> Result<GridFunction>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    grids.validate(expiry)?;
    let (zlo, zhi) = domain.z_range(grids.z_extent);
    let nz = if matches!(domain, Domain::Dirichlet(_)) {
        grids.nz
    } else {
        2 * grids.nz - 1
    };
    let z = Axis::new(zlo, zhi, nz)?;
    let y = Axis::new(grids.y_min, grids.y_max, grids.ny)?;
    let (hz, hy) = (z.step(), y.step());
    let dtau = (expiry - grids.t0) / grids.nt as f64;
    let stride = grids.nt / (grids.stored_layers - 1);
    let ny = grids.ny;
    let zs = z.nodes();
    let ys = y.nodes();
    let mask: Vec<f64> = zs.iter().map(|&zz| domain.mask(zz)).collect();

    // z-operator rows depend on y only through v = e^y.
    let zrows: Vec<(f64, f64, f64)> = ys.iter().map(|&yy| stencil(0.5 * yy.exp(), hz)).collect();
    let yrow = stencil(0.5 * sigma_hat * sigma_hat, hy);

    for &(zl, zd, zu) in [zrows[0], zrows[ny - 1], yrow].iter() {
        let n = 3;
        check_dominance(
            &vec![-0.5 * dtau * zl; n],
            &vec![1.0 - 0.5 * dtau * zd; n],
            &vec![-0.5 * dtau * zu; n],
        )?;
    }

    let mut cur = vec![0.0; ny * nz];
    let mut f = vec![0.0; ny * nz];
    let mut half = vec![0.0; ny * nz];
    let mut layers: Vec<Vec<f64>> = vec![cur.clone()];
    let mut times = vec![expiry];

    for step in 0..grids.nt {
        let t_hi = expiry - step as f64 * dtau;
        let t_mid = t_hi - 0.5 * dtau;
        // ∂τ G = A G - source.
        f.par_chunks_mut(nz).enumerate().for_each(|(j, row)| {
            for (i, r) in row.iter_mut().enumerate() {
                *r = if mask[i] == 0.0 {
                    0.0
                } else {
                    -mask[i] * source(zs[i], ys[j], t_mid)
                };
            }
        });

        // Implicit in z, explicit in y.
        let prev = &cur;
        let fr = &f;
        half.par_chunks_mut(nz)
            .enumerate()
            .try_for_each(|(j, out)| -> Result<()> {
                out.fill(0.0);
                if j == 0 || j + 1 == ny {
                    return Ok(());
                }
                let (zl, zd, zu) = zrows[j];
                let (yl, yd, yu) = yrow;
                let mut rhs = vec![0.0; nz - 2];
                for i in 1..nz - 1 {
                    let g = |jj: usize| prev[jj * nz + i];
                    rhs[i - 1] = g(j)
                        + 0.5 * dtau * (yl * g(j - 1) + yd * g(j) + yu * g(j + 1))
                        + 0.5 * dtau * fr[j * nz + i];
                }
                let n = nz - 2;
                let lower = vec![-0.5 * dtau * zl; n];
                let diag = vec![1.0 - 0.5 * dtau * zd; n];
                let upper = vec![-0.5 * dtau * zu; n];
                let mut scratch = Vec::new();
                tridiag::solve(&lower, &diag, &upper, &mut rhs, &mut scratch)?;
                out[1..nz - 1].copy_from_slice(&rhs);
                Ok(())
            })?;

        // Implicit in y, explicit in z.
        let hr = &half;
        let cols: Vec<Vec<f64>> = (1..nz - 1)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let n = ny - 2;
                let mut rhs = vec![0.0; n];
                for j in 1..ny - 1 {
                    let (zl, zd, zu) = zrows[j];
                    let g = |ii: usize| hr[j * nz + ii];
                    rhs[j - 1] = g(i)
                        + 0.5 * dtau * (zl * g(i - 1) + zd * g(i) + zu * g(i + 1))
                        + 0.5 * dtau * fr[j * nz + i];
                }
                let (yl, yd, yu) = yrow;
                let lower = vec![-0.5 * dtau * yl; n];
                let diag = vec![1.0 - 0.5 * dtau * yd; n];
                let upper = vec![-0.5 * dtau * yu; n];
                let mut scratch = Vec::new();
                tridiag::solve(&lower, &diag, &upper, &mut rhs, &mut scratch)?;
                Ok(rhs)
            })
            .collect::<Result<_>>()?;
        cur.fill(0.0);
        for (ci, col) in cols.iter().enumerate() {
            let i = ci + 1;
            for (cj, &val) in col.iter().enumerate() {
                cur[(cj + 1) * nz + i] = val;
            }
        }
        if cur.iter().any(|x| !x.is_finite()) {
            return Err(Error::GridFailure(format!(
                "non-finite values at t = {t_mid}"
            )));
        }
        if (step + 1) % stride == 0 {
            layers.push(cur.clone());
            times.push(expiry - (step + 1) as f64 * dtau);
        }
    }
    layers.reverse();
    times.reverse();
    *times.first_mut().unwrap() = grids.t0;
    GridFunction::from_layers(zs, ys, times, layers)
}

/// Solution of the per-frequency problem on the `y` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabUSolution {
    pub omega: f64,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    /// `values[layer][j]`, layers ordered as `t`.
    pub values: Vec<Vec<Complex64>>,
}

impl ParabUSolution {
    /// Cubic interpolation at `v` on the layer `layer`.
    pub fn value_at(&self, v: f64, layer: usize) -> Result<Complex64> {
        let y = v.ln();
        let (lo, hi) = (self.y[0], *self.y.last().unwrap());
        if !(y >= lo && y <= hi) {
            return Err(Error::OutOfGrid {
                axis: "y",
                value: y,
                lo,
                hi,
            });
        }
        let s = crate::interp::stencil_start(&self.y, y);
        let w = crate::interp::lagrange4(&self.y, s, y);
        Ok((0..4).map(|a| self.values[layer][s + a] * w[a]).sum())
    }
}

/// Backward Crank–Nicolson solve of
/// `U_t + (σ̂²/2)(U_yy - U_y) - (ω² + iω)(e^y/2) U = F` with `U(T) = 0`.
pub fn solve_parab_u<F>(
    omega: f64,
    y: &Axis,
    source: F,
    sigma_hat: f64,
    expiry: f64,
    t0: f64,
    nt: usize,
    stored_layers: usize,
) -> Result<ParabUSolution>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    parab_u_with_terminal(
        omega,
        y,
        source,
        sigma_hat,
        expiry,
        t0,
        nt,
        stored_layers,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
fn parab_u_with_terminal<F>(
    omega: f64,
    y: &Axis,
    source: F,
    sigma_hat: f64,
    expiry: f64,
    t0: f64,
    nt: usize,
    stored_layers: usize,
    terminal: Option<&[Complex64]>,
) -> Result<ParabUSolution>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    if nt == 0 || stored_layers < 2 || !nt.is_multiple_of(stored_layers - 1) || !(expiry > t0) {
        return Err(Error::InvalidGrid(
            "need nt > 0, stored_layers - 1 dividing nt, T > t0".into(),
        ));
    }
    let ys = y.nodes();
    let ny = ys.len();
    let dtau = (expiry - t0) / nt as f64;
    let stride = nt / (stored_layers - 1);
    let (yl, yd, yu) = stencil(0.5 * sigma_hat * sigma_hat, y.step());
    let lam = Complex64::new(-0.5 * omega * omega, -0.5 * omega);
    let react: Vec<Complex64> = ys.iter().map(|&yy| lam * yy.exp()).collect();

    let n = ny - 2;
    let lower = vec![Complex64::new(-0.5 * dtau * yl, 0.0); n];
    let upper = vec![Complex64::new(-0.5 * dtau * yu, 0.0); n];
    let diag: Vec<Complex64> = (1..ny - 1)
        .map(|j| Complex64::new(1.0 - 0.5 * dtau * yd, 0.0) - react[j] * (0.5 * dtau))
        .collect();
    check_dominance(&lower, &diag, &upper)?;

    let mut cur = match terminal {
        Some(h) => h.to_vec(),
        None => vec![Complex64::new(0.0, 0.0); ny],
    };
    let mut layers = vec![cur.clone()];
    let mut times = vec![expiry];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = Vec::new();
    for step in 0..nt {
        let t_mid = expiry - (step as f64 + 0.5) * dtau;
        for j in 1..ny - 1 {
            let a = cur[j - 1] * yl + cur[j] * yd + cur[j + 1] * yu + react[j] * cur[j];
            rhs[j - 1] = cur[j] + a * (0.5 * dtau) - source(ys[j].exp(), t_mid) * dtau;
        }
        tridiag::solve(&lower, &diag, &upper, &mut rhs, &mut scratch)?;
        cur[0] = Complex64::new(0.0, 0.0);
        cur[ny - 1] = Complex64::new(0.0, 0.0);
        cur[1..ny - 1].copy_from_slice(&rhs);
        if (step + 1) % stride == 0 {
            layers.push(cur.clone());
            times.push(expiry - (step + 1) as f64 * dtau);
        }
    }
    layers.reverse();
    times.reverse();
    times[0] = t0;
    Ok(ParabUSolution {
        omega,
        y: ys,
        t: times,
        values: layers,
    })
}

/// Residuals of a candidate surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeResidualReport {
    pub interior_max: f64,
    pub interior_l2: f64,
    /// `max |G - reference|` on `z = 0`, when `z = 0` is a node.
    pub dirichlet_at_money: Option<f64>,
    /// Largest one-sided `|∂z (G - reference)|` at `z = 0`.
    pub neumann_at_money: Option<f64>,
    /// `max |G - reference|` on the last time layer.
    pub terminal: f64,
    pub h_z: f64,
    pub h_y: f64,
    pub h_t: f64,
    pub interior_nodes: usize,
}

/// Index box `[lo, hi]` (inclusive) restricting the interior residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualBox {
    pub z: (f64, f64),
    pub y: (f64, f64),
    pub t: (f64, f64),
}

/// Evaluates `G_t + (v/2)(G_zz - G_z) + (σ̂²/2)(G_yy - G_y) - source` by central
/// differences at interior nodes inside `region` (all interior nodes if
/// `None`), plus boundary residuals against `reference` (zero if `None`).
pub fn residual<F>(
    candidate: &GridFunction,
    source: F,
    sigma_hat: f64,
    reference: Option<&GridFunction>,
    region: Option<ResidualBox>,
) -> Result<PdeResidualReport>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    let (z, y, t) = (&candidate.z, &candidate.y, &candidate.t);
    let (nz, ny, nt) = (z.len(), y.len(), t.len());
    if nz < 3 || ny < 3 || nt < 3 {
        return Err(Error::InvalidGrid(
            "residual needs at least three nodes per axis".into(),
        ));
    }
    if let Some(r) = reference {
        if r.z != *z || r.y != *y || r.t != *t {
            return Err(Error::InvalidGrid(
                "reference grid differs from candidate grid".into(),
            ));
        }
    }
    let inside = |x: f64, b: Option<(f64, f64)>| b.is_none_or(|(lo, hi)| x >= lo && x <= hi);
    let d2 = |xm: f64, x0: f64, xp: f64, fm: f64, f0: f64, fp: f64| {
        // Three-point first and second derivatives on a possibly uneven grid.
        let (h1, h2) = (x0 - xm, xp - x0);
        let d1 = (-h2 / (h1 * (h1 + h2))) * fm
            + ((h2 - h1) / (h1 * h2)) * f0
            + (h1 / (h2 * (h1 + h2))) * fp;
        let dd = 2.0 * (fm / (h1 * (h1 + h2)) - f0 / (h1 * h2) + fp / (h2 * (h1 + h2)));
        (d1, dd)
    };

    let per_layer: Vec<(f64, f64, usize)> = (1..nt - 1)
        .into_par_iter()
        .map(|k| {
            let mut mx = 0.0f64;
            let mut ss = 0.0;
            let mut count = 0usize;
            if !inside(t[k], region.map(|r| r.t)) {
                return (0.0, 0.0, 0);
            }
            for j in 1..ny - 1 {
                if !inside(y[j], region.map(|r| r.y)) {
                    continue;
                }
                let v = y[j].exp();
                for i in 1..nz - 1 {
                    if !inside(z[i], region.map(|r| r.z)) {
                        continue;
                    }
                    let g = |kk: usize, jj: usize, ii: usize| candidate.get(kk, jj, ii);
                    let (gt, _) = d2(
                        t[k - 1],
                        t[k],
                        t[k + 1],
                        g(k - 1, j, i),
                        g(k, j, i),
                        g(k + 1, j, i),
                    );
                    let (gz, gzz) = d2(
                        z[i - 1],
                        z[i],
                        z[i + 1],
                        g(k, j, i - 1),
                        g(k, j, i),
                        g(k, j, i + 1),
                    );
                    let (gy, gyy) = d2(
                        y[j - 1],
                        y[j],
                        y[j + 1],
                        g(k, j - 1, i),
                        g(k, j, i),
                        g(k, j + 1, i),
                    );
                    let r = gt + 0.5 * v * (gzz - gz) + 0.5 * sigma_hat * sigma_hat * (gyy - gy)
                        - source(z[i], y[j], t[k]);
                    mx = mx.max(r.abs());
                    ss += r * r;
                    count += 1;
                }
            }
            (mx, ss, count)
        })
        .collect();
    let interior_max = per_layer.iter().map(|p| p.0).fold(0.0, f64::max);
    let count: usize = per_layer.iter().map(|p| p.2).sum();
    let ss: f64 = crate::stats::pairwise_sum(&per_layer.iter().map(|p| p.1).collect::<Vec<_>>());
    let interior_l2 = if count > 0 {
        (ss / count as f64).sqrt()
    } else {
        0.0
    };

    let diff = |k: usize, j: usize, i: usize| {
        candidate.get(k, j, i) - reference.map_or(0.0, |r| r.get(k, j, i))
    };
    let zero = z.iter().position(|&zz| zz == 0.0);
    let (dirichlet, neumann) = match zero {
        None => (None, None),
        Some(i0) => {
            let mut dmax = 0.0f64;
            let mut nmax = 0.0f64;
            for k in 0..nt {
                for j in 0..ny {
                    dmax = dmax.max(diff(k, j, i0).abs());
                    if i0 + 2 < nz {
                        let h = z[i0 + 1] - z[i0];
                        let d = (-3.0 * diff(k, j, i0) + 4.0 * diff(k, j, i0 + 1)
                            - diff(k, j, i0 + 2))
                            / (2.0 * h);
                        nmax = nmax.max(d.abs());
                    }
                    if i0 >= 2 {
                        let h = z[i0] - z[i0 - 1];
                        let d = (3.0 * diff(k, j, i0) - 4.0 * diff(k, j, i0 - 1)
                            + diff(k, j, i0 - 2))
                            / (2.0 * h);
                        nmax = nmax.max(d.abs());
                    }
                }
            }
            (Some(dmax), Some(nmax))
        }
    };
    let mut terminal = 0.0f64;
    for j in 0..ny {
        for i in 0..nz {
            terminal = terminal.max(diff(nt - 1, j, i).abs());
        }
    }
    Ok(PdeResidualReport {
        interior_max,
        interior_l2,
        dirichlet_at_money: dirichlet,
        neumann_at_money: neumann,
        terminal,
        h_z: (z[nz - 1] - z[0]) / (nz - 1) as f64,
        h_y: (y[ny - 1] - y[0]) / (ny - 1) as f64,
        h_t: (t[nt - 1] - t[0]) / (nt - 1) as f64,
        interior_nodes: count,
    })
}
