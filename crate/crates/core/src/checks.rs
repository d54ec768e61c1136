//! Consistency suites behind the `check` command.
//!
//! Each suite returns a [`SuiteReport`] with machine-readable details; a
//! suite that cannot run (bad configuration, numerical breakdown) returns an
//! error instead.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;

use crate::bs::{
    bs_price, source_profile, DiscountedOption, MarketParams, Moneyness, OptionKind, OptionSpec,
};
use crate::config::{OracleDomain, RunConfig, Suite};
use crate::error::{Error, Result};
use crate::fd::{residual, solve_bvp, Domain, FdGrids, GridFunction, ResidualBox};
use crate::market::{arbitrage_strategy_bs, MarketBatch, StrategyConfig};
use crate::smile::{correction_spectra, reconstruct, Probe, Reconstruction};
use crate::table::CorrectionTable;
use crate::Side;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub failures: Vec<String>,
    pub details: serde_json::Value,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl CheckReport {
    pub fn failures(&self) -> Vec<String> {
        self.suites
            .iter()
            .flat_map(|s| {
                s.failures
                    .iter()
                    .map(move |f| format!("{}: {f}", suite_name(s.suite)))
            })
            .collect()
    }
}

pub fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::PdeResidual => "pde-residual",
        Suite::Boundary => "boundary",
        Suite::OracleEquivalence => "oracle-equivalence",
        Suite::Arbitrage => "arbitrage",
    }
}

/// Runs the configured suites in order.
pub fn run_checks(cfg: &RunConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut suites = Vec::new();
    for &suite in &cfg.check.suites {
        let start = Instant::now();
        let (failures, details) = match suite {
            Suite::PdeResidual => pde_residual(cfg)?,
            Suite::Boundary => boundary(cfg)?,
            Suite::OracleEquivalence => oracle_equivalence(cfg)?,
            Suite::Arbitrage => arbitrage(cfg)?,
        };
        suites.push(SuiteReport {
            suite,
            passed: failures.is_empty(),
            failures,
            details,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(CheckReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

type SuiteOutcome = Result<(Vec<String>, serde_json::Value)>;

/// Source of the unit correction: `L û = -s(z, (T - t) v)`.
fn unit_source(expiry: f64) -> impl Fn(f64, f64, f64) -> f64 + Sync {
    move |z, y, t| -source_profile(z, (expiry - t) * y.exp())
}

/// Residual of `H_BS` against the source over a box, on grids refined three
/// times; returns the maxima per level and the observed orders.
pub fn bs_residual_orders(sigma_hat: f64, expiry: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let opt = DiscountedOption::new(1.0, expiry, OptionKind::Call);
    let mut maxima = Vec::new();
    for n in [20usize, 40, 80, 160] {
        let axis = |lo: f64, hi: f64| {
            (0..=n)
                .map(|i| lo + (hi - lo) * i as f64 / n as f64)
                .collect::<Vec<_>>()
        };
        let g = GridFunction::from_fn(
            axis(-1.0, 1.0),
            axis(0.02f64.ln(), 0.2f64.ln()),
            axis(0.0, 0.5 * expiry),
            |z, y, t| bs_price(&Moneyness::from_log(z, 1.0, y.exp(), t), &opt),
        )?;
        let src = |z: f64, y: f64, t: f64| {
            0.5 * sigma_hat * sigma_hat * source_profile(z, (expiry - t) * y.exp())
        };
        maxima.push(residual(&g, src, sigma_hat, None, None)?.interior_max);
    }
    let orders = maxima.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok((maxima, orders))
}

/// Grids with enough stored layers for a time derivative.
fn layered(grids: &FdGrids) -> FdGrids {
    let mut g = grids.clone();
    if g.stored_layers < 3 {
        let per = (1..=g.nt)
            .find(|d| g.nt.is_multiple_of(*d) && g.nt / d <= 64)
            .unwrap_or(g.nt);
        g.stored_layers = g.nt / per + 1;
    }
    g
}

fn pde_residual(cfg: &RunConfig) -> SuiteOutcome {
    let tol = &cfg.check.tolerances;
    let sigma_hat = cfg.market.sigma_hat;
    let expiry = cfg.check.expiry;
    let mut failures = Vec::new();
    let (maxima, orders) = bs_residual_orders(sigma_hat, expiry)?;
    let worst = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    if worst < tol.pde_order_min {
        failures.push(format!(
            "Black-Scholes residual order {worst:.3} < {}",
            tol.pde_order_min
        ));
    }
    let mut details = json!({ "bs_residual_max": maxima, "bs_orders": orders });

    let candidate = match &cfg.check.candidate {
        Some(path) => Some(GridFunction::read_binary(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?),
        None if sigma_hat == 0.0 => None,
        None => {
            let g = layered(&cfg.fd);
            let tab = CorrectionTable::from_fd(
                &g,
                expiry,
                sigma_hat,
                cfg.numerics.reconstruction,
                g.z_extent,
            )?;
            Some(tab.grid().clone())
        }
    };
    if let (Some(path), Some(c)) = (&cfg.check.write_candidate, &candidate) {
        c.write_binary(std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    if let Some(c) = candidate {
        let (t0, t1) = (c.t[0], *c.t.last().unwrap());
        let (y0, y1) = (c.y[0], *c.y.last().unwrap());
        let (z0, z1) = (c.z[0], *c.z.last().unwrap());
        let hz = (z1 - z0) / (c.z.len() - 1) as f64;
        let t_box = (t0, t1 - 0.25 * (t1 - t0));
        let y_box = (y0 + 0.1 * (y1 - y0), y1 - 0.1 * (y1 - y0));
        // The correction is only required to solve the equation off the money.
        let mut worst = 0.0f64;
        for z in [(z0, -1.5 * hz), (1.5 * hz, z1)] {
            let region = ResidualBox {
                z,
                y: y_box,
                t: t_box,
            };
            let r = residual(&c, unit_source(expiry), sigma_hat, None, Some(region))?;
            worst = worst.max(r.interior_max);
        }
        if !(worst <= tol.pde_residual_max) {
            failures.push(format!(
                "correction residual {worst:.3e} > {:.3e}",
                tol.pde_residual_max
            ));
        }
        details["candidate_residual_max"] = json!(worst);
    }
    Ok((failures, details))
}

/// Weights for the side limits `0-` and `0+` under `mode`.
fn limit_weights(mode: Reconstruction) -> [[f64; 2]; 2] {
    [mode.side_weights(-1.0), mode.side_weights(1.0)]
}

fn boundary(cfg: &RunConfig) -> SuiteOutcome {
    let tol = &cfg.check.tolerances;
    let sigma_hat = cfg.market.sigma_hat;
    let expiry = cfg.check.expiry;
    let mode = cfg.numerics.reconstruction;
    let hz = 0.02;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for &v in &cfg.check.variances {
        for t in [0.0, 0.5 * expiry] {
            let w = limit_weights(mode);
            let probes: Vec<Probe> = [
                (0.0, 0),
                (-hz, 0),
                (-2.0 * hz, 0),
                (0.0, 1),
                (hz, 1),
                (2.0 * hz, 1),
            ]
            .iter()
            .map(|&(z, s)| Probe { z, weights: w[s] })
            .collect();
            let Some(sp) = correction_spectra(expiry, v, t, sigma_hat, &cfg.numerics, &probes)?
            else {
                rows.push(json!({ "v": v, "t": t, "trivial": true }));
                continue;
            };
            let zs: Vec<f64> = (-300..=300).map(|i| i as f64 * 0.01).collect();
            let u = reconstruct(&sp.negative, &sp.positive, &zs, mode)?;
            let max_u = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let max_uz = u
                .windows(3)
                .zip(zs.windows(3))
                .filter(|(_, z)| mode == Reconstruction::WholeLine || z[0] * z[2] > 0.0)
                .fold(0.0f64, |m, (u, _)| m.max(((u[2] - u[0]) / 0.02).abs()));
            let p = |i: usize| sp.probes[i].1;
            for (side, base) in [("0-", 0usize), ("0+", 3)] {
                let (u0, u1, u2) = (p(base).mean, p(base + 1).mean, p(base + 2).mean);
                let se = p(base).std_error;
                let sign = if base == 0 { 1.0 } else { -1.0 };
                let slope = sign * (3.0 * u0 - 4.0 * u1 + u2) / (2.0 * hz);
                let value_bound = (tol.boundary_se_mult * se).max(tol.boundary_value_rel * max_u);
                let slope_bound =
                    (tol.boundary_se_mult * se / hz).max(tol.boundary_slope_rel * max_uz);
                if u0.abs() > value_bound {
                    failures.push(format!(
                        "|u({side})| = {:.3e} > {value_bound:.3e} at v = {v}, t = {t}",
                        u0.abs()
                    ));
                }
                if slope.abs() > slope_bound {
                    failures.push(format!(
                        "|u_z({side})| = {:.3e} > {slope_bound:.3e} at v = {v}, t = {t}",
                        slope.abs()
                    ));
                }
                rows.push(json!({
                    "v": v, "t": t, "side": side, "u": u0, "std_error": se, "u_z": slope,
                    "max_u": max_u, "max_u_z": max_uz, "value_bound": value_bound, "slope_bound": slope_bound,
                }));
            }
        }
    }
    Ok((
        failures,
        json!({ "reconstruction": mode, "h_z": hz, "points": rows }),
    ))
}

/// Finite-difference correction at `t0` under `domain`, half-lines joined at zero.
fn oracle_surface(
    domain: OracleDomain,
    sigma_hat: f64,
    expiry: f64,
    grids: &FdGrids,
) -> Result<[GridFunction; 2]> {
    let src = unit_source(expiry);
    Ok(match domain {
        OracleDomain::Dirichlet => [
            solve_bvp(
                Domain::Dirichlet(Side::Negative),
                &src,
                sigma_hat,
                expiry,
                grids,
            )?,
            solve_bvp(
                Domain::Dirichlet(Side::Positive),
                &src,
                sigma_hat,
                expiry,
                grids,
            )?,
        ],
        OracleDomain::ExtendByZero => [
            solve_bvp(
                Domain::ExtendByZero(Side::Negative),
                &src,
                sigma_hat,
                expiry,
                grids,
            )?,
            solve_bvp(
                Domain::ExtendByZero(Side::Positive),
                &src,
                sigma_hat,
                expiry,
                grids,
            )?,
        ],
        OracleDomain::WholeLine => {
            let g = solve_bvp(Domain::WholeLine, &src, sigma_hat, expiry, grids)?;
            [g.clone(), g]
        }
    })
}

fn oracle_equivalence(cfg: &RunConfig) -> SuiteOutcome {
    let tol = &cfg.check.tolerances;
    let sigma_hat = cfg.market.sigma_hat;
    let expiry = cfg.check.expiry;
    let mode = cfg.numerics.reconstruction;
    let domain = cfg.check.oracle_domain.unwrap_or(match mode {
        Reconstruction::HalfLine => OracleDomain::Dirichlet,
        Reconstruction::WholeLine => OracleDomain::WholeLine,
    });
    let mut failures = Vec::new();
    if sigma_hat == 0.0 {
        return Ok((failures, json!({ "trivial": true })));
    }
    let grids = FdGrids {
        t0: 0.0,
        ..cfg.fd.clone()
    };
    let surf = oracle_surface(domain, sigma_hat, expiry, &grids)?;
    let n = (cfg.check.oracle_z_max / 0.1).round() as i64;
    let zs: Vec<f64> = (-n..=n).map(|i| i as f64 * 0.1).collect();
    let mut rows = Vec::new();
    for &v in &cfg.check.variances {
        let probes: Vec<Probe> = zs.iter().map(|&z| Probe::reconstructed(z, mode)).collect();
        let sp = correction_spectra(expiry, v, 0.0, sigma_hat, &cfg.numerics, &probes)?
            .ok_or(Error::Degenerate("no correction at t = 0"))?;
        let g: Vec<f64> = zs
            .iter()
            .map(|&z| {
                let side = if z < 0.0 { 0 } else { 1 };
                surf[side].interpolate_layer(0, z, v.ln())
            })
            .collect::<Result<_>>()?;
        let max_g = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut worst = 0.0f64;
        for (i, &z) in zs.iter().enumerate() {
            let e = sp.probes[i].1;
            let bound = tol.oracle_se_mult * e.std_error + tol.oracle_rel * max_g;
            let gap = (e.mean - g[i]).abs();
            worst = worst.max(gap / bound);
            if gap > bound {
                failures.push(format!(
                    "|u - G| = {gap:.3e} > {bound:.3e} at z = {z:.2}, v = {v}"
                ));
            }
        }
        rows.push(json!({ "v": v, "max_G": max_g, "worst_gap_over_bound": worst }));
    }
    Ok((
        failures,
        json!({ "domain": domain, "reconstruction": mode, "variances": rows }),
    ))
}

fn arbitrage(cfg: &RunConfig) -> SuiteOutcome {
    let tol = &cfg.check.tolerances;
    let seed = cfg
        .numerics
        .seed
        .ok_or_else(|| Error::Config("the arbitrage suite needs numerics.seed".into()))?;
    let params = cfg.market.params()?;
    let expiry = cfg.check.expiry;
    let s0 = params.s0;
    let call = |k: f64| OptionSpec::new(k, expiry, OptionKind::Call);
    let run = |p: MarketParams, legs: [OptionSpec; 2]| -> Result<f64> {
        let b = MarketBatch::new(
            p,
            expiry,
            cfg.check.arbitrage_steps,
            cfg.check.arbitrage_paths,
            seed,
        )?;
        Ok(arbitrage_strategy_bs(&b, 1, legs, &StrategyConfig::default())?.t_stat)
    };
    let two = [call(0.9 * s0)?, call(1.1 * s0)?];
    let single = [call(s0)?, OptionSpec::new(s0, expiry, OptionKind::Put)?];
    let mut failures = Vec::new();
    let t_main = run(params, two)?;
    let t_single = run(params, single)?;
    let t_flat = if params.sigma_hat != 0.0 {
        Some(run(
            MarketParams {
                sigma_hat: 0.0,
                ..params
            },
            two,
        )?)
    } else {
        None
    };
    if params.sigma_hat != 0.0 && t_main.abs() <= tol.arbitrage_t_min {
        failures.push(format!(
            "two-strike |t| = {:.2} <= {}",
            t_main.abs(),
            tol.arbitrage_t_min
        ));
    }
    if params.sigma_hat == 0.0 && t_main.abs() >= tol.control_t_max {
        failures.push(format!(
            "two-strike |t| = {:.2} >= {} without vol of vol",
            t_main.abs(),
            tol.control_t_max
        ));
    }
    if t_single.abs() >= tol.control_t_max {
        failures.push(format!(
            "single-strike |t| = {:.2} >= {}",
            t_single.abs(),
            tol.control_t_max
        ));
    }
    if let Some(t) = t_flat.filter(|t| t.abs() >= tol.control_t_max) {
        failures.push(format!(
            "zero vol-of-vol control |t| = {:.2} >= {}",
            t.abs(),
            tol.control_t_max
        ));
    }
    Ok((
        failures,
        json!({ "t_two_strike": t_main, "t_single_strike": t_single, "t_zero_vol_of_vol": t_flat }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_scholes_residual_is_second_order() {
        let (maxima, orders) = bs_residual_orders(0.5, 1.0).unwrap();
        assert!(maxima.windows(2).all(|w| w[1] < w[0]));
        assert!(orders.iter().all(|&o| o >= 1.8), "{orders:?}");
    }

    #[test]
    fn flat_market_passes_quickly() {
        let mut cfg = RunConfig::default();
        cfg.numerics.seed = Some(1);
        cfg.check.arbitrage_paths = 256;
        cfg.check.arbitrage_steps = 50;
        let rep = run_checks(&cfg).unwrap();
        assert!(rep.passed, "{:?}", rep.failures());
    }

    #[test]
    fn arbitrage_suite_needs_a_seed() {
        let mut cfg = RunConfig::default();
        cfg.check.suites = vec![Suite::Arbitrage];
        assert!(matches!(run_checks(&cfg), Err(Error::Config(_))));
    }
}
