//! Monte Carlo evaluation of the Fourier-space correction for all frequencies
//! from one batch of variance paths.
//!
//! For `λ(ω) = -(ω² + iω)/2` and `I(s) = ∫_t^s v dq` the unit spectrum is
//! `E ∫_t^T e^{λ(ω) I(s)} Ŝ_m(ω, (T - s) v(s)) ds`. Along each path the
//! factors `e^{λ(jΔω) I}` are generated by a two-term recurrence in `j`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::frequency::{FrequencyGrid, Reconstruction, SpectralSolution};
use super::source::{SourceTable, TransformConfig};
use crate::bs::DiscountedOption;
use crate::error::{Error, Result};
use crate::stats::{pairwise_reduce, ComplexMoments, McEstimate, Moments};
use crate::volpath::{VolPath, VolPathBatch};
use crate::Side;

/// Exponential factors below this are dropped along with higher frequencies.
const CUTOFF: f64 = 1e-17;

/// A point where per-path values of `u` are recorded, to give exact standard
/// errors: `weights` multiply the negative and positive side reconstructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub z: f64,
    pub weights: [f64; 2],
}

impl Probe {
    pub fn side(side: Side, z: f64) -> Self {
        let mut weights = [0.0; 2];
        weights[side.index()] = 1.0;
        Self { z, weights }
    }

    pub fn reconstructed(z: f64, mode: Reconstruction) -> Self {
        Self {
            z,
            weights: mode.side_weights(z),
        }
    }
}

/// Table resolution and truncation used by the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub transform: TransformConfig,
    pub theta_nodes_per_decade: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            transform: TransformConfig::default(),
            theta_nodes_per_decade: 40,
        }
    }
}

/// Both half-line spectra per unit `½σ̂²K̃`, with probe estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpectra {
    pub expiry: f64,
    pub v: f64,
    pub t: f64,
    pub negative: SpectralSolution,
    pub positive: SpectralSolution,
    pub probes: Vec<(Probe, McEstimate<f64>)>,
    pub n_paths: usize,
    pub theta_max: f64,
}

impl UnitSpectra {
    pub fn side(&self, side: Side) -> &SpectralSolution {
        match side {
            Side::Negative => &self.negative,
            Side::Positive => &self.positive,
        }
    }
}

struct ChunkResult {
    spectra: Vec<ComplexMoments>,
    probes: Vec<Moments>,
    theta_max: f64,
}

fn merge(a: ChunkResult, b: ChunkResult) -> ChunkResult {
    ChunkResult {
        spectra: a
            .spectra
            .into_iter()
            .zip(b.spectra)
            .map(|(x, y)| x.merge(y))
            .collect(),
        probes: a
            .probes
            .into_iter()
            .zip(b.probes)
            .map(|(x, y)| x.merge(y))
            .collect(),
        theta_max: a.theta_max.max(b.theta_max),
    }
}

fn check_batch(batch: &VolPathBatch, expiry: f64) -> Result<()> {
    if batch.grid().end() != expiry {
        return Err(Error::InvalidGrid(format!(
            "path grid ends at {} but the option expires at {expiry}",
            batch.grid().end()
        )));
    }
    Ok(())
}

/// Largest `(T - s) v(s)` seen on the batch.
fn batch_theta_max(batch: &VolPathBatch, expiry: f64) -> f64 {
    let times = batch.grid().times();
    let per = batch.map_chunks(|range| {
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        let mut m = 0.0f64;
        for i in range {
            batch.path_into(i, &mut dw, &mut p);
            for (s, v) in times.iter().zip(&p.values) {
                m = m.max((expiry - s) * v);
            }
        }
        m
    });
    per.into_iter().fold(0.0, f64::max)
}

/// Unit spectra of both sides at `(v, t)`, where `batch` starts.
pub fn unit_spectra(
    grid: &FrequencyGrid,
    expiry: f64,
    batch: &VolPathBatch,
    probes: &[Probe],
    cfg: &KernelConfig,
) -> Result<UnitSpectra> {
    check_batch(batch, expiry)?;
    let width = grid.nonneg_len();
    let d_omega = grid.d_omega();
    let theta_max = batch_theta_max(batch, expiry);
    let table = SourceTable::build(
        d_omega,
        width,
        theta_max * 1.0001,
        cfg.theta_nodes_per_decade,
        &cfg.transform,
    )?;
    let coeffs: Vec<Vec<Complex64>> = probes
        .iter()
        .map(|p| grid.hermitian_coefficients(p.z))
        .collect();
    let times = batch.grid().times();
    let tw = batch.grid().trapezoid_weights();

    let chunks = batch.map_chunks(|range| {
        let mut out = ChunkResult {
            spectra: vec![ComplexMoments::default(); 2 * width],
            probes: vec![Moments::default(); probes.len()],
            theta_max: 0.0,
        };
        let mut dw = Vec::new();
        let mut p = VolPath::default();
        let mut acc = [
            vec![Complex64::new(0.0, 0.0); width],
            vec![Complex64::new(0.0, 0.0); width],
        ];
        for i in range {
            batch.path_into(i, &mut dw, &mut p);
            acc.iter_mut()
                .for_each(|a| a.fill(Complex64::new(0.0, 0.0)));
            for k in 0..times.len() {
                let theta = (expiry - times[k]) * p.values[k];
                out.theta_max = out.theta_max.max(theta);
                let Some((s, w)) = table.weights(theta) else {
                    continue;
                };
                let ik = p.integrals[k];
                let neg = table.stencil(Side::Negative, s);
                let pos = table.stencil(Side::Positive, s);
                let floor = CUTOFF * tw[k];
                let mut e = Complex64::new(tw[k], 0.0);
                let mut r = Complex64::from_polar(
                    (-0.5 * d_omega * d_omega * ik).exp(),
                    -0.5 * d_omega * ik,
                );
                let q = (-d_omega * d_omega * ik).exp();
                let [a0, a1] = &mut acc;
                for j in 0..width {
                    let s1 =
                        neg[0][j] * w[0] + neg[1][j] * w[1] + neg[2][j] * w[2] + neg[3][j] * w[3];
                    let s2 =
                        pos[0][j] * w[0] + pos[1][j] * w[1] + pos[2][j] * w[2] + pos[3][j] * w[3];
                    a0[j] += e * s1;
                    a1[j] += e * s2;
                    e *= r;
                    r *= q;
                    if e.re.abs() + e.im.abs() < floor {
                        break;
                    }
                }
            }
            for side in 0..2 {
                for j in 0..width {
                    out.spectra[side * width + j].push(acc[side][j]);
                }
            }
            for (pi, probe) in probes.iter().enumerate() {
                let mut val = 0.0;
                for side in 0..2 {
                    if probe.weights[side] != 0.0 {
                        let re: f64 = coeffs[pi]
                            .iter()
                            .zip(&acc[side])
                            .map(|(a, x)| (a * x).re)
                            .sum();
                        val += probe.weights[side] * re;
                    }
                }
                out.probes[pi].push(val);
            }
        }
        out
    });
    let total = pairwise_reduce(chunks, merge).expect("batch has at least one path");

    let side_solution = |side: Side| {
        let m = &total.spectra[side.index() * width..(side.index() + 1) * width];
        let means: Vec<Complex64> = m.iter().map(|x| x.mean).collect();
        let ses: Vec<f64> = m.iter().map(|x| x.std_error()).collect();
        SpectralSolution::from_nonnegative(side, *grid, &means, &ses)
    };
    Ok(UnitSpectra {
        expiry,
        v: batch.v0(),
        t: batch.grid().start(),
        negative: side_solution(Side::Negative),
        positive: side_solution(Side::Positive),
        probes: probes
            .iter()
            .zip(&total.probes)
            .map(|(p, m)| (*p, m.estimate()))
            .collect(),
        n_paths: batch.n_paths(),
        theta_max: total.theta_max,
    })
}

/// `U_m(ω, v, t)` on the full grid for the option `opt`.
pub fn compute_u(
    side: Side,
    grid: &FrequencyGrid,
    opt: &DiscountedOption,
    sigma_hat: f64,
    batch: &VolPathBatch,
    cfg: &KernelConfig,
) -> Result<SpectralSolution> {
    let unit = unit_spectra(grid, opt.expiry, batch, &[], cfg)?;
    Ok(unit
        .side(side)
        .scaled(0.5 * sigma_hat * sigma_hat * opt.k_tilde))
}

/// Single-frequency source along paths, for use with
/// [`crate::volpath::exp_functional`]: `g(v, s) = F_m(ω, v, s)`.
pub struct SourceAlongPaths {
    table: SourceTable,
    side: Side,
    j: usize,
    expiry: f64,
    scale: f64,
    conjugate: bool,
}

impl SourceAlongPaths {
    /// `omega` must be a multiple of `d_omega`; the table covers `θ ≤ theta_max`.
    pub fn new(
        side: Side,
        omega: f64,
        d_omega: f64,
        opt: &DiscountedOption,
        sigma_hat: f64,
        theta_max: f64,
        cfg: &KernelConfig,
    ) -> Result<Self> {
        let j = (omega.abs() / d_omega).round() as usize;
        if ((j as f64) * d_omega - omega.abs()).abs() > 1e-9 * d_omega {
            return Err(Error::InvalidGrid(format!(
                "ω = {omega} is not on the Δω = {d_omega} lattice"
            )));
        }
        let table = SourceTable::build(
            d_omega,
            j + 1,
            theta_max,
            cfg.theta_nodes_per_decade,
            &cfg.transform,
        )?;
        Ok(Self {
            table,
            side,
            j,
            expiry: opt.expiry,
            scale: 0.5 * sigma_hat * sigma_hat * opt.k_tilde,
            conjugate: omega < 0.0,
        })
    }

    pub fn eval(&self, v: f64, s: f64) -> Complex64 {
        let theta = (self.expiry - s) * v;
        let f = self.table.eval(self.side, theta, self.j) * self.scale;
        if self.conjugate {
            f.conj()
        } else {
            f
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::OptionKind;
    use crate::smile::frequency::reconstruct;
    use crate::volpath::{exp_functional, simulate_paths, RngSeed, TimeGrid};

    fn batch(v: f64, t: f64, sh: f64, n: usize, m: usize, seed: u64) -> VolPathBatch {
        simulate_paths(
            v,
            t,
            sh,
            TimeGrid::uniform(t, 1.0, m).unwrap(),
            n,
            RngSeed::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn zero_vol_of_vol_scale_gives_zero() {
        let grid = FrequencyGrid::new(2.0, 0.5).unwrap();
        let opt = DiscountedOption::new(100.0, 1.0, OptionKind::Call);
        let b = batch(0.04, 0.0, 0.5, 64, 16, 1);
        let u = compute_u(
            Side::Positive,
            &grid,
            &opt,
            0.0,
            &b,
            &KernelConfig::default(),
        )
        .unwrap();
        assert!(u.values.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn matches_single_frequency_functional() {
        // The recurrence kernel and exp_functional with the same table agree
        // path by path, so the means agree to rounding.
        let grid = FrequencyGrid::new(6.0, 0.5).unwrap();
        let opt = DiscountedOption::new(100.0, 1.0, OptionKind::Call);
        let b = batch(0.04, 0.0, 0.5, 256, 32, 3);
        let cfg = KernelConfig::default();
        let unit = unit_spectra(&grid, 1.0, &b, &[], &cfg).unwrap();
        for &omega in &[0.0, 2.5, 6.0, -1.5] {
            let src = SourceAlongPaths::new(
                Side::Positive,
                omega,
                0.5,
                &opt,
                1.0,
                unit.theta_max * 1.0001,
                &cfg,
            )
            .unwrap();
            let lam = Complex64::new(-0.5 * omega * omega, -0.5 * omega);
            let est = exp_functional(&b, lam, |v, s| src.eval(v, s)).unwrap();
            let idx = grid
                .omegas()
                .iter()
                .position(|&w| (w - omega).abs() < 1e-12)
                .unwrap();
            let kern = unit.positive.values[idx] * (0.5 * 100.0);
            assert!(
                (est.mean - kern).norm() < 1e-10 * kern.norm().max(1e-12),
                "{omega}: {} vs {}",
                est.mean,
                kern
            );
        }
    }

    #[test]
    fn probes_agree_with_inverse_transform() {
        let grid = FrequencyGrid::new(20.0, 0.1).unwrap();
        let b = batch(0.04, 0.0, 0.5, 128, 32, 5);
        let zs = [-0.4, -0.05, 0.0, 0.1, 0.6];
        let probes: Vec<Probe> = zs
            .iter()
            .map(|&z| Probe::reconstructed(z, Reconstruction::HalfLine))
            .collect();
        let unit = unit_spectra(&grid, 1.0, &b, &probes, &KernelConfig::default()).unwrap();
        let u = reconstruct(
            &unit.negative,
            &unit.positive,
            &zs,
            Reconstruction::HalfLine,
        )
        .unwrap();
        for ((_, est), u) in unit.probes.iter().zip(&u) {
            assert!((est.mean - u).abs() < 1e-12 * u.abs().max(1e-6));
            assert!(est.std_error > 0.0);
        }
    }

    #[test]
    fn hermitian_and_decaying() {
        let grid = FrequencyGrid::new(40.0, 0.05).unwrap();
        let b = batch(0.04, 0.0, 0.5, 128, 64, 7);
        let unit = unit_spectra(&grid, 1.0, &b, &[], &KernelConfig::default()).unwrap();
        for s in [&unit.negative, &unit.positive] {
            assert_eq!(s.hermitian_defect(), 0.0);
            // ω²|U(ω)| stays bounded by its value at ω = 10 out to Ω.
            let at = |w: f64| {
                let idx = grid.index_of_nonneg((w / 0.05f64).round() as usize);
                w * w * s.values[idx].norm()
            };
            let base = at(10.0);
            for w in [15.0, 20.0, 30.0, 40.0] {
                assert!(at(w) <= 1.1 * base, "ω = {w}: {} vs {base}", at(w));
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let grid = FrequencyGrid::new(5.0, 0.25).unwrap();
        let b = batch(0.04, 0.0, 0.5, 300, 16, 9);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    unit_spectra(
                        &grid,
                        1.0,
                        &b,
                        &[Probe::side(Side::Negative, -0.1)],
                        &KernelConfig::default(),
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1), run(3));
    }
}
