//! Tensor grids and surfaces stored on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{lagrange4, stencil_start};

/// Uniform axis `lo + i (hi - lo)/(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "bad axis [{lo}, {hi}] with {n} nodes"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        // Convex combination: exact endpoints, and an exact zero at the centre
        // of a symmetric axis with an odd node count.
        let m = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                let s = i as f64 / m;
                self.lo * (1.0 - s) + self.hi * s
            })
            .collect()
    }
}

/// Values `G(z_i, y_j, t_k)` stored as `values[(k ny + j) nz + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

fn check_axis(name: &str, x: &[f64]) -> Result<()> {
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl GridFunction {
    pub fn new(z: Vec<f64>, y: Vec<f64>, t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_axis("z", &z)?;
        check_axis("y", &y)?;
        check_axis("t", &t)?;
        if values.len() != z.len() * y.len() * t.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {}x{}x{} grid",
                values.len(),
                t.len(),
                y.len(),
                z.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(
                "grid function has non-finite values".into(),
            ));
        }
        Ok(Self { z, y, t, values })
    }

    pub(crate) fn from_layers(
        z: Vec<f64>,
        y: Vec<f64>,
        t: Vec<f64>,
        layers: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(z, y, t, layers.concat())
    }

    /// Samples `f(z, y, t)` on the tensor grid.
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(
        z: Vec<f64>,
        y: Vec<f64>,
        t: Vec<f64>,
        f: F,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(z.len() * y.len() * t.len());
        for &tt in &t {
            for &yy in &y {
                for &zz in &z {
                    values.push(f(zz, yy, tt));
                }
            }
        }
        Self::new(z, y, t, values)
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize, i: usize) -> f64 {
        self.values[(k * self.y.len() + j) * self.z.len() + i]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t.len(), self.y.len(), self.z.len())
    }

    /// Pointwise linear combination `a self + b other` on the same grid.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if self.z != other.z || self.y != other.y || self.t != other.t {
            return Err(Error::InvalidGrid("grids differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(GridFunction {
            values,
            ..self.clone()
        })
    }

    /// Restriction to the nodes with `z` in `[lo, hi]`.
    pub fn restrict_z(&self, lo: f64, hi: f64) -> Result<GridFunction> {
        let idx: Vec<usize> = (0..self.z.len())
            .filter(|&i| self.z[i] >= lo && self.z[i] <= hi)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidGrid(format!("no z nodes in [{lo}, {hi}]")));
        }
        let mut values = Vec::with_capacity(idx.len() * self.y.len() * self.t.len());
        for k in 0..self.t.len() {
            for j in 0..self.y.len() {
                values.extend(idx.iter().map(|&i| self.get(k, j, i)));
            }
        }
        GridFunction::new(
            idx.iter().map(|&i| self.z[i]).collect(),
            self.y.clone(),
            self.t.clone(),
            values,
        )
    }

    /// Bicubic interpolation in `(z, y)` on the stored layer `k`.
    pub fn interpolate_layer(&self, k: usize, z: f64, y: f64) -> Result<f64> {
        for (axis, x, g) in [("z", z, &self.z), ("y", y, &self.y)] {
            let (lo, hi) = (g[0], *g.last().unwrap());
            if !(x >= lo && x <= hi) {
                return Err(Error::OutOfGrid {
                    axis,
                    value: x,
                    lo,
                    hi,
                });
            }
        }
        if self.z.len() < 4 || self.y.len() < 4 {
            return Err(Error::InvalidGrid(
                "interpolation needs four nodes per axis".into(),
            ));
        }
        let si = stencil_start(&self.z, z);
        let wi = lagrange4(&self.z, si, z);
        let sj = stencil_start(&self.y, y);
        let wj = lagrange4(&self.y, sj, y);
        let mut acc = 0.0;
        for (b, wb) in wj.iter().enumerate() {
            for (a, wa) in wi.iter().enumerate() {
                acc += wa * wb * self.get(k, sj + b, si + a);
            }
        }
        Ok(acc)
    }
}
