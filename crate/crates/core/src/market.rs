//! Discrete-time bond, stock, variance and options market.
//!
//! The stock drifts at the riskless rate, so `S̃ = e^{-rt} S` is a martingale;
//! the variance follows `dv = σ̂ v dŵ` with `ŵ` independent of the stock noise.
//! Paths are generated on a fine grid and coarser grids sum the fine
//! increments, so every refinement level sees the same Brownian paths.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

use crate::bs::{bs_volga_v, DiscountedOption, MarketParams, Moneyness, OptionSpec};
use crate::error::{Error, Result};
use crate::stats::{pairwise_reduce, McEstimate, Moments};
use crate::table::{bs_quote, CorrectionTable, Quote};
use crate::volpath::{RngSeed, PATH_CHUNK};

const STOCK_STREAM: u64 = 0x5354;
const VOL_STREAM: u64 = 0x564F;

/// How options are priced along a simulated path.
#[derive(Debug, Clone)]
pub enum PricingRule {
    /// Black–Scholes at the current variance, ignoring its randomness.
    NaiveBs,
    /// `H_BS + u` with `u` from a table built by the correction engine.
    SmileEngine(Arc<CorrectionTable>),
    /// `H_BS + u` with `u` from any supplied grid function.
    GridFunction(Arc<CorrectionTable>),
}

impl PricingRule {
    pub fn name(&self) -> &'static str {
        match self {
            PricingRule::NaiveBs => "naive_bs",
            PricingRule::SmileEngine(_) => "smile_engine",
            PricingRule::GridFunction(_) => "grid_function",
        }
    }

    /// Discounted price and sensitivities at discounted spot `x`.
    pub fn quote(&self, x: f64, v: f64, t: f64, opt: &DiscountedOption) -> Result<Quote> {
        match self {
            PricingRule::NaiveBs => Ok(bs_quote(&Moneyness::from_spot(x, opt.k_tilde, v, t), opt)),
            PricingRule::SmileEngine(tab) | PricingRule::GridFunction(tab) => {
                tab.quote(x, v, t, opt)
            }
        }
    }
}

/// Lazily generated market paths on `[0, horizon]` with `fine_steps` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketBatch {
    params: MarketParams,
    horizon: f64,
    fine_steps: usize,
    n_paths: usize,
    seed: u64,
}

/// One simulated market trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketPath {
    pub times: Vec<f64>,
    pub stock: Vec<f64>,
    pub discounted_stock: Vec<f64>,
    pub variance: Vec<f64>,
    pub bond: Vec<f64>,
}

#[derive(Default)]
struct Scratch {
    dw: Vec<f64>,
    dwh: Vec<f64>,
}

impl MarketBatch {
    pub fn new(
        params: MarketParams,
        horizon: f64,
        fine_steps: usize,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) || fine_steps == 0 || n_paths == 0 {
            return Err(Error::InvalidInput(
                "need horizon > 0, fine_steps > 0 and n_paths > 0".into(),
            ));
        }
        Ok(Self {
            params,
            horizon,
            fine_steps,
            n_paths,
            seed,
        })
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn fine_steps(&self) -> usize {
        self.fine_steps
    }

    fn check_stride(&self, stride: usize) -> Result<usize> {
        if stride == 0 || !self.fine_steps.is_multiple_of(stride) {
            return Err(Error::InvalidInput(format!(
                "stride {stride} does not divide {} fine steps",
                self.fine_steps
            )));
        }
        Ok(self.fine_steps / stride)
    }

    /// Step size at refinement `stride` (number of fine steps per step).
    pub fn dt(&self, stride: usize) -> f64 {
        self.horizon * stride as f64 / self.fine_steps as f64
    }

    /// Fine Brownian increments `(dw, dŵ)` of path `i`.
    pub fn increments(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let mut s = Scratch::default();
        self.increments_into(i, &mut s);
        (s.dw, s.dwh)
    }

    fn increments_into(&self, i: usize, s: &mut Scratch) {
        let h = (self.horizon / self.fine_steps as f64).sqrt();
        let seed = RngSeed::new(self.seed);
        for (stream, out) in [(STOCK_STREAM, &mut s.dw), (VOL_STREAM, &mut s.dwh)] {
            let mut rng = seed.with_stream(stream).path_rng(i as u64);
            out.clear();
            out.extend(
                (0..self.fine_steps)
                    .map(|_| h * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
            );
        }
    }

    pub fn path(&self, i: usize, stride: usize) -> Result<MarketPath> {
        let mut out = MarketPath::default();
        self.path_into(i, stride, &mut Scratch::default(), &mut out)?;
        Ok(out)
    }

    fn path_into(
        &self,
        i: usize,
        stride: usize,
        s: &mut Scratch,
        out: &mut MarketPath,
    ) -> Result<()> {
        let n = self.check_stride(stride)?;
        self.increments_into(i, s);
        let p = &self.params;
        let dt = self.dt(stride);
        let (mut x, mut v) = (p.s0, p.v0);
        out.times.clear();
        out.stock.clear();
        out.discounted_stock.clear();
        out.variance.clear();
        out.bond.clear();
        for k in 0..=n {
            let t = if k == n { self.horizon } else { k as f64 * dt };
            let growth = (p.r * t).exp();
            out.times.push(t);
            out.discounted_stock.push(x);
            out.stock.push(growth * x);
            out.variance.push(v);
            out.bond.push(growth);
            if k == n {
                break;
            }
            let range = k * stride..(k + 1) * stride;
            let dw: f64 = s.dw[range.clone()].iter().sum();
            let dwh: f64 = s.dwh[range].iter().sum();
            x *= (v.sqrt() * dw - 0.5 * v * dt).exp();
            v *= (p.sigma_hat * dwh - 0.5 * p.sigma_hat * p.sigma_hat * dt).exp();
        }
        Ok(())
    }

    /// Runs `per_path` on every path at `stride`, in fixed chunks, and returns
    /// the per-chunk results in path order.
    fn map_chunks<R, F>(&self, stride: usize, per_path: F) -> Result<Vec<Vec<R>>>
    where
        R: Send,
        F: Fn(usize, &MarketPath) -> Result<R> + Sync,
    {
        self.check_stride(stride)?;
        let n_chunks = self.n_paths.div_ceil(PATH_CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut scratch = Scratch::default();
                let mut path = MarketPath::default();
                (c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(self.n_paths))
                    .map(|i| {
                        self.path_into(i, stride, &mut scratch, &mut path)?;
                        per_path(i, &path)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Option price paths for one market path, in discounted units.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedPath {
    pub path: MarketPath,
    pub quotes: Vec<Vec<Quote>>,
}

/// Prices `options` along path `i` of `batch` with `rule`.
pub fn simulate_market(
    batch: &MarketBatch,
    i: usize,
    stride: usize,
    rule: &PricingRule,
    options: &[OptionSpec],
) -> Result<PricedPath> {
    let path = batch.path(i, stride)?;
    let r = batch.params.r;
    let quotes = options
        .iter()
        .map(|o| {
            let opt = o.discounted(r);
            (0..path.times.len())
                .map(|k| {
                    rule.quote(
                        path.discounted_stock[k],
                        path.variance[k],
                        path.times[k].min(opt.expiry),
                        &opt,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PricedPath { path, quotes })
}

impl PricedPath {
    /// CSV rows `path,step,time,stock,discounted_stock,variance,bond`
    /// followed by one undiscounted price column per option.
    pub fn write_csv<W: Write>(&self, w: W, path_index: usize, header: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut names = vec![
            "path".to_string(),
            "step".into(),
            "time".into(),
            "stock".into(),
        ];
        names.extend(["discounted_stock", "variance", "bond"].map(String::from));
        names.extend((0..self.quotes.len()).map(|j| format!("option_{j}")));
        if header {
            out.write_record(&names).map_err(crate::volpath::csv_err)?;
        }
        let p = &self.path;
        for k in 0..p.times.len() {
            let mut row = vec![
                path_index.to_string(),
                k.to_string(),
                format!("{:.17e}", p.times[k]),
                format!("{:.17e}", p.stock[k]),
                format!("{:.17e}", p.discounted_stock[k]),
                format!("{:.17e}", p.variance[k]),
                format!("{:.17e}", p.bond[k]),
            ];
            row.extend(
                self.quotes
                    .iter()
                    .map(|q| format!("{:.17e}", q[k].price * p.bond[k])),
            );
            out.write_record(&row).map_err(crate::volpath::csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Portfolio of one path at one rebalancing date.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub bond: f64,
    pub stock: f64,
    pub options: [f64; 2],
    /// Undiscounted wealth `X(t)`.
    pub wealth: f64,
}

/// Summary of the delta/vega-neutral two-option strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub rule: String,
    pub dt: f64,
    /// Terminal discounted wealth from zero initial wealth.
    pub pnl: McEstimate<f64>,
    pub t_stat: f64,
    /// `Σ ξ Δt` along the path.
    pub predicted: McEstimate<f64>,
    pub max_net_delta: f64,
    pub max_net_vega: f64,
    pub max_wealth_identity_error: f64,
    pub max_self_financing_error: f64,
    pub renormalized_steps: usize,
    pub idle_steps: usize,
    /// Portfolio of path 0 at every date, for inspection.
    pub first_path: Vec<Portfolio>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Positions are only held while `t < T - stop_steps Δt`.
    pub stop_steps: f64,
    /// When `|∂H₂/∂v| < singular_tol |∂H₁/∂v|` the second leg is normalised
    /// instead.
    pub singular_tol: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            stop_steps: 2.0,
            singular_tol: 1e-8,
        }
    }
}

#[derive(Default)]
struct ArbAcc {
    pnl: Moments,
    predicted: Moments,
    net_delta: f64,
    net_vega: f64,
    identity: f64,
    self_fin: f64,
    renorm: usize,
    idle: usize,
}

impl ArbAcc {
    fn merge(mut self, o: Self) -> Self {
        self.pnl = self.pnl.merge(o.pnl);
        self.predicted = self.predicted.merge(o.predicted);
        self.net_delta = self.net_delta.max(o.net_delta);
        self.net_vega = self.net_vega.max(o.net_vega);
        self.identity = self.identity.max(o.identity);
        self.self_fin = self.self_fin.max(o.self_fin);
        self.renorm += o.renorm;
        self.idle += o.idle;
        self
    }
}

/// Option weights `(γ₁, γ₂)` with zero combined vega; `None` if both vegas vanish.
fn vega_neutral(q1: &Quote, q2: &Quote, tol: f64) -> Option<([f64; 2], bool)> {
    if q2.vega.abs() > tol * q1.vega.abs() && q2.vega != 0.0 {
        Some(([1.0, -q1.vega / q2.vega], false))
    } else if q1.vega != 0.0 {
        Some(([-q2.vega / q1.vega, 1.0], true))
    } else {
        None
    }
}

/// Self-financed strategy long one unit of the first option, short enough of
/// the second to cancel the variance exposure and hedged in the stock, with
/// both options priced by naive Black–Scholes.
///
/// Under the true dynamics the discounted wealth drifts at
/// `ξ = ½σ̂²v² (γ₁ ∂²H₁/∂v² + γ₂ ∂²H₂/∂v²)`. With a call and a put of the same
/// strike the position is riskless and the drift is zero.
pub fn arbitrage_strategy_bs(
    batch: &MarketBatch,
    stride: usize,
    legs: [OptionSpec; 2],
    cfg: &StrategyConfig,
) -> Result<ArbitrageReport> {
    let p = *batch.params();
    let opts = legs.map(|o| o.discounted(p.r));
    if opts[0].expiry != opts[1].expiry || opts[0].expiry > batch.horizon + 1e-12 {
        return Err(Error::InvalidInput(
            "both legs must expire together, within the horizon".into(),
        ));
    }
    let dt = batch.dt(stride);
    let t_stop = opts[0].expiry - cfg.stop_steps * dt;
    let rule = PricingRule::NaiveBs;
    let first = std::sync::Mutex::new(Vec::new());

    let chunks = batch.map_chunks(stride, |i, path| {
        let mut acc = ArbAcc::default();
        let mut wealth = 0.0; // discounted
        let mut predicted = 0.0;
        let mut held: Option<(f64, f64, [f64; 2])> = None; // (β, γ₀, γ)
        let mut last: Option<(f64, [f64; 2])> = None;
        let mut trace = Vec::new();
        for k in 0..path.times.len() {
            let (t, x, v) = (path.times[k], path.discounted_stock[k], path.variance[k]);
            let tq = t.min(opts[0].expiry);
            let q = [
                rule.quote(x, v, tq, &opts[0])?,
                rule.quote(x, v, tq, &opts[1])?,
            ];
            if let (Some((beta, g0, g)), Some((x0, p0))) = (held.take(), last) {
                let new_wealth = beta + g0 * x + g[0] * q[0].price + g[1] * q[1].price;
                let gain =
                    g0 * (x - x0) + g[0] * (q[0].price - p0[0]) + g[1] * (q[1].price - p0[1]);
                acc.self_fin = acc
                    .self_fin
                    .max((new_wealth - wealth - gain).abs() / (p.s0 + wealth.abs()));
                wealth = new_wealth;
            }
            last = Some((x, [q[0].price, q[1].price]));
            if t >= t_stop - 1e-12 * dt {
                continue;
            }
            let Some((g, renorm)) = vega_neutral(&q[0], &q[1], cfg.singular_tol) else {
                acc.idle += 1;
                held = Some((wealth, 0.0, [0.0; 2]));
                continue;
            };
            acc.renorm += renorm as usize;
            let g0 = -(g[0] * q[0].delta + g[1] * q[1].delta);
            let beta = wealth - g0 * x - g[0] * q[0].price - g[1] * q[1].price;
            acc.net_delta = acc
                .net_delta
                .max((g0 + g[0] * q[0].delta + g[1] * q[1].delta).abs());
            acc.net_vega = acc
                .net_vega
                .max((g[0] * q[0].vega + g[1] * q[1].vega).abs());

            // Wealth identity in market units.
            let growth = path.bond[k];
            let (s, pm) = (path.stock[k], [q[0].price * growth, q[1].price * growth]);
            let parts = [beta * path.bond[k], g0 * s, g[0] * pm[0], g[1] * pm[1]];
            let x_market = wealth * growth;
            let scale = parts
                .iter()
                .map(|a| a.abs())
                .sum::<f64>()
                .max(x_market.abs())
                .max(p.s0);
            acc.identity = acc
                .identity
                .max((x_market - parts.iter().sum::<f64>()).abs() / scale);

            let m = [
                Moneyness::from_spot(x, opts[0].k_tilde, v, t),
                Moneyness::from_spot(x, opts[1].k_tilde, v, t),
            ];
            let xi = 0.5
                * p.sigma_hat
                * p.sigma_hat
                * v
                * v
                * (g[0] * bs_volga_v(&m[0], &opts[0]) + g[1] * bs_volga_v(&m[1], &opts[1]));
            let h = path.times.get(k + 1).map_or(0.0, |&tn| tn - t);
            predicted += xi * h;
            if i == 0 {
                trace.push(Portfolio {
                    bond: beta,
                    stock: g0,
                    options: g,
                    wealth: x_market,
                });
            }
            held = Some((beta, g0, g));
        }
        if i == 0 {
            *first.lock().expect("trace lock") = trace;
        }
        acc.pnl.push(wealth);
        acc.predicted.push(predicted);
        Ok(acc)
    })?;
    let per_chunk: Vec<ArbAcc> = chunks
        .into_iter()
        .map(|c| c.into_iter().fold(ArbAcc::default(), ArbAcc::merge))
        .collect();
    let acc = pairwise_reduce(per_chunk, ArbAcc::merge).unwrap_or_default();
    let pnl = acc.pnl.estimate();
    Ok(ArbitrageReport {
        rule: rule.name().into(),
        dt,
        t_stat: pnl.mean / pnl.std_error.max(1e-12 * p.s0),
        pnl,
        predicted: acc.predicted.estimate(),
        max_net_delta: acc.net_delta,
        max_net_vega: acc.net_vega,
        max_wealth_identity_error: acc.identity,
        max_self_financing_error: acc.self_fin,
        renormalized_steps: acc.renorm,
        idle_steps: acc.idle,
        first_path: first.into_inner().expect("trace lock"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicationConfig {
    /// Steps with `|∂H₁/∂v| < min_vega K̃₁` are skipped.
    pub min_vega: f64,
    /// Largest tolerated fraction of skipped steps.
    pub max_skip_fraction: f64,
    /// Residuals are accumulated up to this time; `None` means `T - 2Δt`.
    pub t_stop: Option<f64>,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            min_vega: 1e-6,
            max_skip_fraction: 0.05,
            t_stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub rule: String,
    pub dt: f64,
    pub t_stop: f64,
    /// Root mean square over paths of the accumulated residual `Σ r`.
    pub rms_accumulated: f64,
    pub max_accumulated: f64,
    pub accumulated: McEstimate<f64>,
    /// Root mean square of single-step residuals.
    pub rms_step: f64,
    pub skipped: usize,
    pub total_steps: usize,
    /// Largest `|P̃(K) - H_BS|` when the discounted stock crosses a strike.
    pub max_crossing_gap: f64,
}

#[derive(Default)]
struct RepAcc {
    acc: Moments,
    sq: Moments,
    step_sq: Moments,
    max_acc: f64,
    skipped: usize,
    total: usize,
    gap: f64,
}

impl RepAcc {
    fn merge(mut self, o: Self) -> Self {
        self.acc = self.acc.merge(o.acc);
        self.sq = self.sq.merge(o.sq);
        self.step_sq = self.step_sq.merge(o.step_sq);
        self.max_acc = self.max_acc.max(o.max_acc);
        self.skipped += o.skipped;
        self.total += o.total;
        self.gap = self.gap.max(o.gap);
        self
    }
}

/// Residual of reconstructing the second option's discounted price change
/// from the stock and the first option:
/// `r = ΔP̃₂ - a ΔS̃ - b ΔP̃₁` with `b = ∂_vH₂/∂_vH₁` and `a = ∂_xH₂ - b ∂_xH₁`
/// taken at the start of each step.
pub fn replication_residual(
    batch: &MarketBatch,
    stride: usize,
    rule: &PricingRule,
    legs: [OptionSpec; 2],
    cfg: &ReplicationConfig,
) -> Result<ReplicationReport> {
    let p = *batch.params();
    let opts = legs.map(|o| o.discounted(p.r));
    if opts[0].expiry != opts[1].expiry || opts[0].expiry > batch.horizon + 1e-12 {
        return Err(Error::InvalidInput(
            "both legs must expire together, within the horizon".into(),
        ));
    }
    let dt = batch.dt(stride);
    let t_stop = cfg.t_stop.unwrap_or(opts[0].expiry - 2.0 * dt);
    let chunks = batch.map_chunks(stride, |_, path| {
        let mut a = RepAcc::default();
        let mut sum = 0.0;
        let mut prev: Option<(f64, [Quote; 2])> = None;
        for k in 0..path.times.len() {
            let (t, x, v) = (path.times[k], path.discounted_stock[k], path.variance[k]);
            if t > t_stop + 1e-9 * dt {
                break;
            }
            let q = [
                rule.quote(x, v, t, &opts[0])?,
                rule.quote(x, v, t, &opts[1])?,
            ];
            if let Some((x0, q0)) = prev.take() {
                a.total += 1;
                if q0[0].vega.abs() < cfg.min_vega * opts[0].k_tilde {
                    a.skipped += 1;
                } else {
                    let b = q0[1].vega / q0[0].vega;
                    let delta = q0[1].delta - b * q0[0].delta;
                    let r = (q[1].price - q0[1].price)
                        - delta * (x - x0)
                        - b * (q[0].price - q0[0].price);
                    a.step_sq.push(r * r);
                    sum += r;
                }
                // Crossings of either strike by the discounted stock.
                for o in &opts {
                    if (x0 - o.k_tilde) * (x - o.k_tilde) <= 0.0 && t < o.expiry {
                        let at = rule.quote(o.k_tilde, v, t, o)?.price;
                        let bs =
                            bs_quote(&Moneyness::from_spot(o.k_tilde, o.k_tilde, v, t), o).price;
                        a.gap = a.gap.max((at - bs).abs());
                    }
                }
            }
            prev = Some((x, q));
        }
        a.acc.push(sum);
        a.sq.push(sum * sum);
        a.max_acc = sum.abs();
        Ok(a)
    })?;
    let per_chunk: Vec<RepAcc> = chunks
        .into_iter()
        .map(|c| c.into_iter().fold(RepAcc::default(), RepAcc::merge))
        .collect();
    let a = pairwise_reduce(per_chunk, RepAcc::merge).unwrap_or_default();
    if a.skipped as f64 > cfg.max_skip_fraction * a.total as f64 {
        return Err(Error::TooManySkips {
            skipped: a.skipped,
            total: a.total,
        });
    }
    Ok(ReplicationReport {
        rule: rule.name().into(),
        dt,
        t_stop,
        rms_accumulated: a.sq.mean.sqrt(),
        max_accumulated: a.max_acc,
        accumulated: a.acc.estimate(),
        rms_step: a.step_sq.mean.sqrt(),
        skipped: a.skipped,
        total_steps: a.total,
        max_crossing_gap: a.gap,
    })
}

/// Sample correlation of the fine stock and variance increments over the
/// first `n_paths` paths.
pub fn increment_correlation(batch: &MarketBatch, n_paths: usize) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n_paths.min(batch.n_paths) {
        let (dw, dwh) = batch.increments(i);
        for (a, b) in dw.iter().zip(&dwh) {
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
    }
    sxy / (sxx * syy).sqrt()
}
