//! Driftless lognormal variance paths and exponential functionals of their
//! running integral.
//!
//! A [`VolPathBatch`] is an immutable recipe: initial variance, vol-of-vol,
//! time grid, path count and seed. Path `i` is regenerated on demand from its
//! own ChaCha stream, so a batch of any size costs `O(steps)` memory per worker
//! and the same path comes out bit-identical no matter which thread asks.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::stats::{pairwise_reduce, ComplexMoments, McEstimate};

/// Paths per parallel work item.
pub(crate) const PATH_CHUNK: usize = 64;

/// Strictly increasing time nodes `s_0 < ... < s_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(
                "time grid needs at least two nodes".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("time grid has non-finite nodes".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "time grid is not strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid(
                "time grid needs at least one step".into(),
            ));
        }
        let h = (end - start) / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| start + k as f64 * h).collect();
        times[steps] = end;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Trapezoid weights for integrating a function sampled on the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.times.len();
        let mut w = vec![0.0; n];
        for k in 0..n - 1 {
            let h = self.times[k + 1] - self.times[k];
            w[k] += 0.5 * h;
            w[k + 1] += 0.5 * h;
        }
        w
    }
}

/// Seed plus a stream id; distinct streams give independent batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    /// Generator for one path: the key mixes seed and stream, the ChaCha stream
    /// id is the path index.
    pub fn path_rng(&self, path: u64) -> ChaCha8Rng {
        let key =
            splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_F42D_4C95_7F2D)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(path);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One variance trajectory with its running trapezoidal integral.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VolPath {
    pub values: Vec<f64>,
    pub integrals: Vec<f64>,
}

impl VolPath {
    fn with_len(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            integrals: vec![0.0; n],
        }
    }
}

/// Fills `out` with the exact lognormal solution of `dv = σ̂ v dŵ` driven by the
/// Brownian increments `dw` on `times`.
pub fn lognormal_path(v0: f64, sigma_hat: f64, times: &[f64], dw: &[f64], out: &mut VolPath) {
    let n = times.len();
    debug_assert_eq!(dw.len(), n - 1);
    out.values.resize(n, 0.0);
    out.integrals.resize(n, 0.0);
    let mut v = v0;
    let mut integral = 0.0;
    out.values[0] = v;
    out.integrals[0] = 0.0;
    for k in 0..n - 1 {
        let h = times[k + 1] - times[k];
        let next = v * (sigma_hat * dw[k] - 0.5 * sigma_hat * sigma_hat * h).exp();
        integral += 0.5 * (v + next) * h;
        v = next;
        out.values[k + 1] = v;
        out.integrals[k + 1] = integral;
    }
}

/// Immutable description of a batch of variance paths started at `(v, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolPathBatch {
    v0: f64,
    sigma_hat: f64,
    grid: TimeGrid,
    n_paths: usize,
    seed: RngSeed,
}

/// Batch of `n_paths` variance paths on `grid`, which must start at `t`.
pub fn simulate_paths(
    v: f64,
    t: f64,
    sigma_hat: f64,
    grid: TimeGrid,
    n_paths: usize,
    seed: RngSeed,
) -> Result<VolPathBatch> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidInput(format!(
            "initial variance must be > 0, got {v}"
        )));
    }
    if grid.start() != t {
        return Err(Error::InvalidGrid(format!(
            "grid starts at {} but paths start at t = {t}",
            grid.start()
        )));
    }
    if n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    Ok(VolPathBatch {
        v0: v,
        sigma_hat,
        grid,
        n_paths,
        seed,
    })
}

impl VolPathBatch {
    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    /// Brownian increments of path `i`.
    pub fn increments_into(&self, i: usize, dw: &mut Vec<f64>) {
        let times = self.grid.times();
        dw.clear();
        let mut rng = self.seed.path_rng(i as u64);
        for k in 0..times.len() - 1 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            dw.push((times[k + 1] - times[k]).sqrt() * eps);
        }
    }

    /// Regenerates path `i` into `out`; `dw` is scratch space.
    pub fn path_into(&self, i: usize, dw: &mut Vec<f64>, out: &mut VolPath) {
        self.increments_into(i, dw);
        lognormal_path(self.v0, self.sigma_hat, self.grid.times(), dw, out);
    }

    pub fn path(&self, i: usize) -> VolPath {
        let mut out = VolPath::with_len(self.grid.times().len());
        self.path_into(i, &mut Vec::new(), &mut out);
        out
    }

    /// Runs `per_path` over every path in fixed-size chunks and returns the
    /// chunk results in path order.
    pub(crate) fn map_chunks<R, F>(&self, per_chunk: F) -> Vec<R>
    where
        R: Send,
        F: Fn(std::ops::Range<usize>) -> R + Sync,
    {
        let n_chunks = self.n_paths.div_ceil(PATH_CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| per_chunk(c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(self.n_paths)))
            .collect()
    }

    /// Writes every path as CSV rows `path,step,time,variance,integral`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["path", "step", "time", "variance", "integral"])
            .map_err(csv_err)?;
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        for i in 0..self.n_paths {
            self.path_into(i, &mut dw, &mut p);
            for (k, &s) in self.grid.times().iter().enumerate() {
                out.write_record([
                    i.to_string(),
                    k.to_string(),
                    format!("{s:.17e}"),
                    format!("{:.17e}", p.values[k]),
                    format!("{:.17e}", p.integrals[k]),
                ])
                .map_err(csv_err)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Per-path `∫_t^T v ds` (trapezoid on the batch grid).
pub fn integrated_variance(batch: &VolPathBatch) -> Vec<f64> {
    let chunks = batch.map_chunks(|range| {
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        range
            .map(|i| {
                batch.path_into(i, &mut dw, &mut p);
                *p.integrals.last().unwrap()
            })
            .collect::<Vec<_>>()
    });
    chunks.into_iter().flatten().collect()
}

/// Estimates `E ∫_t^T exp(λ ∫_t^s v dq) g(v(s), s) ds`.
///
/// The outer integral uses the trapezoid rule on the batch grid. `Re λ` must be
/// non-positive so every exponential factor has modulus at most one.
pub fn exp_functional<G>(
    batch: &VolPathBatch,
    lambda: Complex64,
    g: G,
) -> Result<McEstimate<Complex64>>
where
    G: Fn(f64, f64) -> Complex64 + Sync,
{
    if lambda.re > 0.0 {
        return Err(Error::UnstableFunctional(lambda.re));
    }
    let weights = batch.grid.trapezoid_weights();
    let times = batch.grid.times();
    let chunks = batch.map_chunks(|range| {
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        let mut m = ComplexMoments::default();
        for i in range {
            batch.path_into(i, &mut dw, &mut p);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..times.len() {
                let e = (lambda * p.integrals[k]).exp();
                debug_assert!(e.norm() <= 1.0 + 1e-12);
                acc += weights[k] * e * g(p.values[k], times[k]);
            }
            m.push(acc);
        }
        m
    });
    let total = pairwise_reduce(chunks, ComplexMoments::merge).unwrap_or_default();
    Ok(total.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Moments;

    fn batch(v: f64, sigma_hat: f64, m: usize, n: usize, seed: u64) -> VolPathBatch {
        simulate_paths(
            v,
            0.0,
            sigma_hat,
            TimeGrid::uniform(0.0, 1.0, m).unwrap(),
            n,
            RngSeed::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            TimeGrid::new(vec![0.0]),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            TimeGrid::new(vec![0.0, 0.5, 0.5]),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            TimeGrid::new(vec![0.0, 1.0, 0.5]),
            Err(Error::InvalidGrid(_))
        ));
        let g = TimeGrid::uniform(0.25, 1.0, 3).unwrap();
        assert_eq!(g.end(), 1.0);
        let err = simulate_paths(0.04, 0.0, 0.5, g, 10, RngSeed::new(1));
        assert!(matches!(err, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn frozen_variance_without_vol_of_vol() {
        let b = batch(0.04, 0.0, 16, 5, 3);
        for i in 0..5 {
            let p = b.path(i);
            assert!(p.values.iter().all(|&v| v == 0.04));
            assert!((p.integrals.last().unwrap() - 0.04).abs() < 1e-15);
        }
        for iv in integrated_variance(&b) {
            assert!((iv - 0.04).abs() < 1e-15);
        }
    }

    #[test]
    fn paths_positive_and_integrals_monotone() {
        let b = batch(0.04, 1.5, 64, 50, 9);
        for i in 0..50 {
            let p = b.path(i);
            assert_eq!(p.integrals[0], 0.0);
            assert!(p.values.iter().all(|&v| v > 0.0));
            assert!(p.integrals.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let a = batch(0.04, 0.5, 32, 10, 42);
        let b = batch(0.04, 0.5, 32, 10, 42);
        let c = simulate_paths(
            0.04,
            0.0,
            0.5,
            TimeGrid::uniform(0.0, 1.0, 32).unwrap(),
            10,
            RngSeed::new(42).with_stream(1),
        )
        .unwrap();
        for i in 0..10 {
            assert_eq!(a.path(i), b.path(i));
            assert_ne!(a.path(i), c.path(i));
        }
    }

    #[test]
    fn martingale_and_lognormal_law() {
        let v0 = 0.04;
        let sh = 0.5;
        let b = batch(v0, sh, 8, 100_000, 11);
        let mut terminal = Moments::default();
        let mut log_terminal = Moments::default();
        let mut integral = Moments::default();
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        for i in 0..b.n_paths() {
            b.path_into(i, &mut dw, &mut p);
            terminal.push(p.values[8]);
            log_terminal.push(p.values[8].ln());
            integral.push(p.integrals[8]);
        }
        assert!((terminal.mean - v0).abs() < 3.0 * terminal.std_error());
        assert!((integral.mean - v0).abs() < 3.0 * integral.std_error());
        // Sample variance of log v(T) is σ̂² T; its standard error for a normal
        // sample is σ² sqrt(2/(n-1)).
        let target = sh * sh;
        let se = target * (2.0 / (b.n_paths() as f64 - 1.0)).sqrt();
        assert!((log_terminal.variance() - target).abs() < 3.0 * se);
    }

    #[test]
    fn integral_refinement_on_fixed_increments() {
        // Same Brownian path sampled on 64, 128 and 512 steps. Along a rough
        // path the trapezoid error is first order in the step, so halving the
        // step roughly halves the distance to the 512-step value (which itself
        // sits a quarter of the 128-step error away from the limit).
        let fine = batch(0.04, 0.8, 512, 20, 5);
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        let mut ratios = Vec::new();
        for i in 0..20 {
            fine.increments_into(i, &mut dw);
            let coarse = |factor: usize| {
                let steps = 512 / factor;
                let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
                let incs: Vec<f64> = dw.chunks(factor).map(|c| c.iter().sum()).collect();
                let mut out = VolPath::default();
                lognormal_path(0.04, 0.8, &times, &incs, &mut out);
                *out.integrals.last().unwrap()
            };
            lognormal_path(0.04, 0.8, fine.grid().times(), &dw, &mut p);
            let i512 = *p.integrals.last().unwrap();
            let (i64_, i128_) = (coarse(8), coarse(4));
            let e64 = (i64_ - i512).abs();
            let e128 = (i128_ - i512).abs();
            if e128 > 1e-12 {
                ratios.push(e64 / e128);
            }
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        // Exact halving gives (1 - 1/8) / (1/2 - 1/8) = 7/3 against the 512-step proxy.
        assert!(
            (median - 7.0 / 3.0).abs() < 0.6,
            "median error ratio {median}"
        );
    }

    #[test]
    fn exp_functional_trivial_cases() {
        let b = batch(0.04, 0.5, 64, 200, 1);
        let est = exp_functional(&b, Complex64::new(0.0, 0.0), |_, _| {
            Complex64::new(1.0, 0.0)
        })
        .unwrap();
        assert!((est.mean.re - 1.0).abs() < 1e-13 && est.mean.im.abs() < 1e-15);
        assert!(est.std_error < 1e-13);

        let lam = Complex64::new(-0.5 * 9.0, -1.5);
        let frozen = batch(0.04, 0.0, 256, 4, 2);
        let est = exp_functional(&frozen, lam, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        let a = lam * 0.04;
        let exact = (Complex64::new(1.0, 0.0) - a.exp()) / (-a);
        assert!((est.mean - exact).norm() < 1e-5 * exact.norm());

        let err = exp_functional(&b, Complex64::new(0.1, 0.0), |_, _| {
            Complex64::new(1.0, 0.0)
        });
        assert!(matches!(err, Err(Error::UnstableFunctional(_))));
    }

    #[test]
    fn standard_error_halves_when_paths_quadruple() {
        let lam = Complex64::new(-2.0, -1.0);
        let g = |v: f64, s: f64| Complex64::new(v * (1.0 - s), 0.0);
        let se = |n| {
            exp_functional(&batch(0.04, 0.5, 32, n, 8), lam, g)
                .unwrap()
                .std_error
        };
        let ratio = se(4_000) / se(16_000);
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let b = batch(0.04, 0.5, 4, 2, 1);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        assert!(text.starts_with("path,step,time,variance,integral"));
    }
}
