//! Black-Scholes kernel in discounted coordinates.
//!
//! Everything here works with the discounted stock price `x = e^{-rt} S(t)` and
//! discounted strike `k_tilde = e^{-rT} K`, so no rate appears in the pricing
//! formulas. Variance `v` is the squared volatility.
//!
//! Besides prices this module provides the variance sensitivities that drive the
//! stochastic-volatility correction: `∂H/∂v`, `∂²H/∂v²` and the source term
//! `φ = ½ σ̂² v² ∂²H/∂v²`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal distribution function, via `erfc` so both tails keep full
/// relative precision.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    /// Terminal payoff `(x - k)^+` or `(k - x)^+`.
    pub fn payoff(self, x: f64, k: f64) -> f64 {
        match self {
            OptionKind::Call => (x - k).max(0.0),
            OptionKind::Put => (k - x).max(0.0),
        }
    }
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptionKind::Call => f.write_str("call"),
            OptionKind::Put => f.write_str("put"),
        }
    }
}

impl std::str::FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(Error::InvalidInput(format!(
                "unknown option kind {other:?}"
            ))),
        }
    }
}

/// Bond, stock and variance-process parameters.
///
/// `sigma_hat` is the vol-of-vol of the driftless lognormal variance process.
/// A zero value is accepted and reduces every correction to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub r: f64,
    pub s0: f64,
    pub v0: f64,
    pub sigma_hat: f64,
    #[serde(default)]
    pub a_hat: f64,
}

impl MarketParams {
    pub fn new(r: f64, s0: f64, v0: f64, sigma_hat: f64) -> Result<Self> {
        let p = Self {
            r,
            s0,
            v0,
            sigma_hat,
            a_hat: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "rate must be >= 0, got {}",
                self.r
            )));
        }
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "spot must be > 0, got {}",
                self.s0
            )));
        }
        if !(self.v0.is_finite() && self.v0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "initial variance must be > 0, got {}",
                self.v0
            )));
        }
        if !self.sigma_hat.is_finite() {
            return Err(Error::InvalidInput("vol-of-vol must be finite".into()));
        }
        if self.a_hat != 0.0 {
            return Err(Error::InvalidInput(
                "only a driftless variance process (a_hat = 0) is supported".into(),
            ));
        }
        Ok(())
    }

    pub fn discounting(&self) -> Discounting {
        Discounting { r: self.r }
    }
}

/// A European option as quoted: undiscounted strike, expiry and kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub strike: f64,
    pub expiry: f64,
    pub kind: OptionKind,
}

impl OptionSpec {
    pub fn new(strike: f64, expiry: f64, kind: OptionKind) -> Result<Self> {
        if !(strike.is_finite() && strike > 0.0) {
            return Err(Error::InvalidInput(format!(
                "strike must be > 0, got {strike}"
            )));
        }
        if !(expiry.is_finite() && expiry > 0.0) {
            return Err(Error::InvalidInput(format!(
                "expiry must be > 0, got {expiry}"
            )));
        }
        Ok(Self {
            strike,
            expiry,
            kind,
        })
    }

    pub fn discounted(&self, r: f64) -> DiscountedOption {
        DiscountedOption {
            k_tilde: (-r * self.expiry).exp() * self.strike,
            expiry: self.expiry,
            kind: self.kind,
        }
    }
}

/// An option in discounted units: `k_tilde = e^{-rT} K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountedOption {
    pub k_tilde: f64,
    pub expiry: f64,
    pub kind: OptionKind,
}

impl DiscountedOption {
    pub fn new(k_tilde: f64, expiry: f64, kind: OptionKind) -> Self {
        Self {
            k_tilde,
            expiry,
            kind,
        }
    }

    pub fn with_kind(self, kind: OptionKind) -> Self {
        Self { kind, ..self }
    }
}

/// Market state relative to a strike: `x = k_tilde * e^z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moneyness {
    pub x: f64,
    pub z: f64,
    pub v: f64,
    pub t: f64,
}

impl Moneyness {
    pub fn from_spot(x: f64, k_tilde: f64, v: f64, t: f64) -> Self {
        Self {
            x,
            z: (x / k_tilde).ln(),
            v,
            t,
        }
    }

    pub fn from_log(z: f64, k_tilde: f64, v: f64, t: f64) -> Self {
        Self {
            x: k_tilde * z.exp(),
            z,
            v,
            t,
        }
    }

    /// Total remaining variance `(T - t) v`.
    #[inline]
    pub fn theta(&self, expiry: f64) -> f64 {
        (expiry - self.t).max(0.0) * self.v
    }
}

/// `(d_+, d_-)` at total variance `theta` and log-moneyness `z`.
#[inline]
pub(crate) fn d_pair(z: f64, theta: f64) -> (f64, f64) {
    let s = theta.sqrt();
    let a = z / s;
    (a + 0.5 * s, a - 0.5 * s)
}

pub fn d_plus_minus(m: &Moneyness, opt: &DiscountedOption) -> Result<(f64, f64)> {
    if m.t >= opt.expiry {
        return Err(Error::Degenerate("t = T"));
    }
    if m.v <= 0.0 {
        return Err(Error::Degenerate("v = 0"));
    }
    Ok(d_pair(m.z, m.theta(opt.expiry)))
}

/// Discounted Black-Scholes price. At `t = T` or `v = 0` the payoff of the
/// current discounted price is returned.
pub fn bs_price(m: &Moneyness, opt: &DiscountedOption) -> f64 {
    let theta = m.theta(opt.expiry);
    if theta <= 0.0 {
        return opt.kind.payoff(m.x, opt.k_tilde);
    }
    let (dp, dm) = d_pair(m.z, theta);
    // The put is written directly rather than through parity to avoid
    // cancellation deep in the money for the call.
    match opt.kind {
        OptionKind::Call => m.x * norm_cdf(dp) - opt.k_tilde * norm_cdf(dm),
        OptionKind::Put => opt.k_tilde * norm_cdf(-dm) - m.x * norm_cdf(-dp),
    }
}

/// `∂H/∂x`. Uses the payoff slope at the degenerate limits.
pub fn bs_delta(m: &Moneyness, opt: &DiscountedOption) -> f64 {
    let theta = m.theta(opt.expiry);
    let call_delta = if theta <= 0.0 {
        if m.x > opt.k_tilde {
            1.0
        } else if m.x < opt.k_tilde {
            0.0
        } else {
            0.5
        }
    } else {
        norm_cdf(d_pair(m.z, theta).0)
    };
    match opt.kind {
        OptionKind::Call => call_delta,
        OptionKind::Put => call_delta - 1.0,
    }
}

/// `∂²H/∂x²`, kind independent.
pub fn bs_gamma(m: &Moneyness, opt: &DiscountedOption) -> f64 {
    let theta = m.theta(opt.expiry);
    if theta <= 0.0 {
        return 0.0;
    }
    let (dp, _) = d_pair(m.z, theta);
    norm_pdf(dp) / (m.x * theta.sqrt())
}

/// Sensitivity to the variance, `∂H/∂v = x n(d+) sqrt(T-t) / (2 sqrt v)`.
/// Identical for calls and puts.
pub fn bs_vega_v(m: &Moneyness, opt: &DiscountedOption) -> f64 {
    let tau = (opt.expiry - m.t).max(0.0);
    let theta = tau * m.v;
    if theta <= 0.0 {
        return 0.0;
    }
    let (dp, _) = d_pair(m.z, theta);
    m.x * norm_pdf(dp) * tau.sqrt() / (2.0 * m.v.sqrt())
}

/// Second variance derivative `∂²H/∂v²`, written as the difference of the
/// `d_+` and `d_-` terms:
///
/// `x n(d+) (d+'' - d+ d+'^2) - K n(d-) (d-'' - d- d-'^2)`
///
/// where primes are derivatives in `v`.
pub fn bs_volga_v(m: &Moneyness, opt: &DiscountedOption) -> f64 {
    let tau = (opt.expiry - m.t).max(0.0);
    let v = m.v;
    let theta = tau * v;
    if theta <= 0.0 {
        return 0.0;
    }
    let (dp, dm) = d_pair(m.z, theta);
    let sqrt_theta = theta.sqrt();
    let lead = -m.z / (2.0 * v * sqrt_theta);
    let tail = tau.sqrt() / (4.0 * v.sqrt());
    let curv_z = 0.75 * m.z / (v * v * sqrt_theta);
    let curv_s = tau.sqrt() / (8.0 * v * v.sqrt());
    let dp1 = lead + tail;
    let dm1 = lead - tail;
    let dp2 = curv_z - curv_s;
    let dm2 = curv_z + curv_s;
    m.x * norm_pdf(dp) * (dp2 - dp * dp1 * dp1)
        - opt.k_tilde * norm_pdf(dm) * (dm2 - dm * dm1 * dm1)
}

/// Source term `φ = ½ σ̂² v² ∂²H_BS/∂v²`; zero at `t = T`.
pub fn source_phi(m: &Moneyness, opt: &DiscountedOption, sigma_hat: f64) -> f64 {
    0.5 * sigma_hat * sigma_hat * m.v * m.v * bs_volga_v(m, opt)
}

/// `v² ∂²H_BS/∂v² / k_tilde` as a function of log-moneyness and total variance
/// only. The source term is `½ σ̂² k_tilde` times this profile.
///
/// Uses `x n(d+) = k_tilde e^{z/2} e^{-θ/8} n(z/√θ)` and
/// `∂²H/∂v² = ∂H/∂v (d+ d- - 1) / (2v)`.
#[inline]
pub fn source_profile(z: f64, theta: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    let s = theta.sqrt();
    let a = z / s;
    let dd = a * a - 0.25 * theta;
    0.25 * (0.5 * z - 0.125 * theta).exp() * norm_pdf(a) * s * (dd - 1.0)
}

/// Settings for [`implied_vol`].
#[derive(Debug, Clone, Copy)]
pub struct ImpliedVolConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub price_tol: f64,
    pub max_iter: usize,
}

impl Default for ImpliedVolConfig {
    fn default() -> Self {
        Self {
            v_min: 1e-12,
            v_max: 25.0,
            price_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Implied variance: the `v` at which [`bs_price`] reproduces `price`.
///
/// Safeguarded Newton in `v`, falling back to bisection whenever a step leaves
/// the current bracket.
pub fn implied_vol(
    price: f64,
    x: f64,
    t: f64,
    opt: &DiscountedOption,
    cfg: &ImpliedVolConfig,
) -> Result<f64> {
    let tau = opt.expiry - t;
    if tau <= 0.0 {
        return Err(Error::Degenerate("t = T"));
    }
    let k = opt.k_tilde;
    let (lower, upper) = match opt.kind {
        OptionKind::Call => ((x - k).max(0.0), x),
        OptionKind::Put => ((k - x).max(0.0), k),
    };
    if !(price > lower && price < upper) {
        return Err(Error::NoSolution(format!(
            "{} price {price} outside ({lower}, {upper})",
            opt.kind
        )));
    }

    let z = (x / k).ln();
    let f = |v: f64| bs_price(&Moneyness { x, z, v, t }, opt) - price;

    let mut lo = cfg.v_min;
    let mut hi = cfg.v_max;
    if f(lo) > 0.0 {
        return Err(Error::NoSolution(format!(
            "price below the v = {lo:e} value"
        )));
    }
    if f(hi) < 0.0 {
        return Err(Error::NoSolution(format!("price above the v = {hi} value")));
    }

    // At-the-money seed from price ≈ x sqrt(v τ / 2π), applied to the time value.
    let time_value = price - lower;
    let mut v = (2.0 * PI * time_value * time_value / (x * x * tau)).clamp(lo, hi);

    for _ in 0..cfg.max_iter {
        let m = Moneyness { x, z, v, t };
        let diff = bs_price(&m, opt) - price;
        if diff == 0.0 {
            return Ok(v);
        }
        if diff > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let vega = bs_vega_v(&m, opt);
        let step = diff / vega;
        let newton = v - step;
        let in_bracket = vega > 0.0 && newton > lo && newton < hi;
        // Stop once the price matches and the next Newton step is negligible.
        if in_bracket && diff.abs() <= cfg.price_tol && step.abs() <= 1e-13 * v {
            return Ok(newton);
        }
        v = if in_bracket { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(v);
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        lo,
        hi,
    })
}

/// Conversions between market and discounted units at a fixed rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounting {
    pub r: f64,
}

impl Discounting {
    pub fn stock(&self, s: f64, t: f64) -> f64 {
        (-self.r * t).exp() * s
    }

    pub fn strike(&self, k: f64, expiry: f64) -> f64 {
        (-self.r * expiry).exp() * k
    }

    pub fn price(&self, p: f64, t: f64) -> f64 {
        (-self.r * t).exp() * p
    }

    pub fn undiscount_price(&self, p_tilde: f64, t: f64) -> f64 {
        (self.r * t).exp() * p_tilde
    }

    pub fn undiscount_stock(&self, s_tilde: f64, t: f64) -> f64 {
        (self.r * t).exp() * s_tilde
    }

    /// `(S̃, K̃, P̃)` for a stock price, strike and option price observed at `t`.
    pub fn transform(&self, s: f64, k: f64, p: f64, t: f64, expiry: f64) -> (f64, f64, f64) {
        (self.stock(s, t), self.strike(k, expiry), self.price(p, t))
    }

    /// Strike at which an option expiring at `expiry` is at the money at `t`.
    pub fn at_money_strike(&self, s: f64, t: f64, expiry: f64) -> f64 {
        (self.r * (expiry - t)).exp() * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn opt(k: f64, kind: OptionKind) -> DiscountedOption {
        DiscountedOption::new(k, 1.0, kind)
    }

    #[test]
    fn d_pair_at_money_is_symmetric() {
        let o = opt(100.0, OptionKind::Call);
        let (dp, dm) = d_plus_minus(&Moneyness::from_spot(100.0, 100.0, 0.04, 0.0), &o).unwrap();
        assert_relative_eq!(dp, 0.1, epsilon = 1e-15);
        assert_relative_eq!(dm, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn d_pair_unit_log_ratio() {
        let o = opt(1.0, OptionKind::Call);
        let (dp, dm) = d_plus_minus(&Moneyness::from_log(1.0, 1.0, 1.0, 0.0), &o).unwrap();
        assert_relative_eq!(dp, 1.5, epsilon = 1e-15);
        assert_relative_eq!(dm, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn d_pair_difference_identity() {
        let o = DiscountedOption::new(100.0, 0.25, OptionKind::Call);
        let (dp, dm) = d_plus_minus(&Moneyness::from_spot(110.0, 100.0, 0.04, 0.0), &o).unwrap();
        let direct_plus = (1.1f64).ln() / 0.1 + 0.05;
        assert_relative_eq!(dp, direct_plus, epsilon = 1e-14);
        assert_relative_eq!(dp - dm, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn d_pair_degenerate_inputs_signal() {
        let o = opt(100.0, OptionKind::Call);
        let at_expiry = Moneyness::from_spot(100.0, 100.0, 0.04, 1.0);
        assert!(matches!(
            d_plus_minus(&at_expiry, &o),
            Err(Error::Degenerate(_))
        ));
        let zero_var = Moneyness::from_spot(100.0, 100.0, 0.0, 0.0);
        assert!(matches!(
            d_plus_minus(&zero_var, &o),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn terminal_and_deterministic_limits() {
        let m = Moneyness::from_spot(120.0, 100.0, 0.04, 1.0);
        assert_eq!(bs_price(&m, &opt(100.0, OptionKind::Call)), 20.0);
        assert_eq!(bs_price(&m, &opt(100.0, OptionKind::Put)), 0.0);

        let m = Moneyness::from_spot(80.0, 100.0, 1e-14, 0.0);
        assert!(bs_price(&m, &opt(100.0, OptionKind::Call)) < 1e-12);
        assert_relative_eq!(
            bs_price(&m, &opt(100.0, OptionKind::Put)),
            20.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn vega_vanishes_at_expiry_and_matches_between_kinds() {
        let m = Moneyness::from_spot(93.0, 100.0, 0.09, 0.5);
        let c = bs_vega_v(&m, &opt(100.0, OptionKind::Call));
        let p = bs_vega_v(&m, &opt(100.0, OptionKind::Put));
        assert_eq!(c, p);
        let near = Moneyness::from_spot(93.0, 100.0, 0.09, 1.0 - 1e-12);
        assert!(bs_vega_v(&near, &opt(100.0, OptionKind::Call)) < 1e-3);
    }

    #[test]
    fn vega_matches_central_difference() {
        let o = opt(100.0, OptionKind::Call);
        let h = 1e-5;
        for &x in &[100.0, 80.0, 125.0] {
            let m = Moneyness::from_spot(x, 100.0, 0.04, 0.0);
            let up = bs_price(&Moneyness { v: 0.04 + h, ..m }, &o);
            let dn = bs_price(&Moneyness { v: 0.04 - h, ..m }, &o);
            assert_relative_eq!(
                bs_vega_v(&m, &o),
                (up - dn) / (2.0 * h),
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn at_money_vega_reduction() {
        let m = Moneyness::from_spot(100.0, 100.0, 0.04, 0.0);
        let expect = 100.0 * (-0.04f64 / 8.0).exp() / (2.0 * (2.0 * PI * 0.04).sqrt());
        assert_relative_eq!(
            bs_vega_v(&m, &opt(100.0, OptionKind::Put)),
            expect,
            max_relative = 1e-14
        );
    }

    #[test]
    fn at_money_volga_matches_second_difference() {
        // Second central difference of the price in v, step 1e-4, evaluated
        // with Richardson extrapolation: -1252.88148 for K = 100, v = 0.04, τ = 1.
        let m = Moneyness::from_spot(100.0, 100.0, 0.04, 0.0);
        let volga = bs_volga_v(&m, &opt(100.0, OptionKind::Call));
        assert_relative_eq!(volga, -1252.881_477_974_318, max_relative = 1e-12);
    }

    #[test]
    fn source_vanishes_without_vol_of_vol_and_in_far_wings() {
        let o = opt(100.0, OptionKind::Call);
        let m = Moneyness::from_spot(90.0, 100.0, 0.04, 0.3);
        assert_eq!(source_phi(&m, &o, 0.0), 0.0);
        for z in [-5.0, 5.0] {
            let m = Moneyness::from_log(z, 100.0, 0.04, 0.0);
            assert!(source_phi(&m, &o, 1.0).abs() < 1e-8 * 100.0);
        }
        let at_expiry = Moneyness::from_spot(90.0, 100.0, 0.04, 1.0);
        assert_eq!(source_phi(&at_expiry, &o, 0.5), 0.0);
    }

    #[test]
    fn source_profile_matches_kernel() {
        let k = 87.0;
        for &(z, v, t) in &[
            (0.0, 0.04, 0.0),
            (-0.7, 0.2, 0.3),
            (1.3, 0.5, 0.9),
            (0.05, 0.01, 0.99),
        ] {
            let o = opt(k, OptionKind::Put);
            let m = Moneyness::from_log(z, k, v, t);
            let theta = (1.0 - t) * v;
            let direct = source_phi(&m, &o, 0.7);
            let profile = 0.5 * 0.49 * k * source_profile(z, theta);
            assert_relative_eq!(direct, profile, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn implied_vol_rejects_prices_outside_band() {
        let o = opt(100.0, OptionKind::Call);
        let cfg = ImpliedVolConfig::default();
        assert!(matches!(
            implied_vol(5.0, 110.0, 0.0, &o, &cfg),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(
            implied_vol(110.0, 110.0, 0.0, &o, &cfg),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn implied_vol_approaches_zero_near_intrinsic() {
        let o = opt(100.0, OptionKind::Call);
        let cfg = ImpliedVolConfig::default();
        let v_a = implied_vol(10.0 + 1e-3, 110.0, 0.0, &o, &cfg).unwrap();
        let v_b = implied_vol(10.0 + 1e-6, 110.0, 0.0, &o, &cfg).unwrap();
        assert!(v_b < v_a && v_a < 0.01);
    }

    #[test]
    fn discount_transforms_round_trip() {
        let d = Discounting { r: 0.0 };
        assert_eq!(d.transform(100.0, 90.0, 7.0, 0.5, 1.0), (100.0, 90.0, 7.0));
        let d = Discounting { r: 0.05 };
        let (s, k, p) = d.transform(100.0, 105.0, 7.0, 1.0, 2.0);
        assert_relative_eq!(s, 100.0 * (-0.05f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(k, 105.0 * (-0.1f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(d.undiscount_stock(s, 1.0), 100.0, epsilon = 1e-12);
        assert_relative_eq!(d.undiscount_price(p, 1.0), 7.0, epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn put_call_parity(z in -2.0f64..2.0, v in 0.005f64..1.5, t in 0.0f64..0.99) {
            let k = 100.0;
            let m = Moneyness::from_log(z, k, v, t);
            let c = bs_price(&m, &opt(k, OptionKind::Call));
            let p = bs_price(&m, &opt(k, OptionKind::Put));
            let scale = m.x + k;
            prop_assert!((c - p - (m.x - k)).abs() <= 1e-12 * scale);
        }

        #[test]
        fn prices_within_static_bounds_and_monotone(z in -2.0f64..2.0, v in 0.005f64..1.0, t in 0.0f64..0.99) {
            let k = 100.0;
            let m = Moneyness::from_log(z, k, v, t);
            let c = bs_price(&m, &opt(k, OptionKind::Call));
            let p = bs_price(&m, &opt(k, OptionKind::Put));
            prop_assert!(c >= 0.0 && c <= m.x);
            prop_assert!(p >= 0.0 && p <= k);
            let mv = Moneyness { v: v * 1.01, ..m };
            // Deep in the money the time value is below rounding of the intrinsic part.
            let slack = 1e-12 * k;
            prop_assert!(bs_price(&mv, &opt(k, OptionKind::Call)) >= c - slack);
            prop_assert!(bs_price(&mv, &opt(k, OptionKind::Put)) >= p - slack);
            let mx = Moneyness::from_log(z + 0.01, k, v, t);
            prop_assert!(bs_price(&mx, &opt(k, OptionKind::Call)) >= c - slack);
        }

        #[test]
        fn volga_is_kind_independent(z in -2.0f64..2.0, v in 0.01f64..1.0, t in 0.0f64..0.99) {
            let m = Moneyness::from_log(z, 100.0, v, t);
            let c = bs_volga_v(&m, &opt(100.0, OptionKind::Call));
            let p = bs_volga_v(&m, &opt(100.0, OptionKind::Put));
            prop_assert!((c - p).abs() <= 1e-12 * c.abs().max(1e-300));
        }

        #[test]
        fn implied_vol_round_trip(z in -0.5f64..0.5, v in 0.01f64..1.0, t in 0.0f64..0.9) {
            let k = 100.0;
            let m = Moneyness::from_log(z, k, v, t);
            // Invert the out-of-the-money side, where the price carries the information.
            let kind = if z < 0.0 { OptionKind::Call } else { OptionKind::Put };
            let o = opt(k, kind);
            let price = bs_price(&m, &o);
            prop_assume!(price > 1e-8 * k);
            let v_imp = implied_vol(price, m.x, t, &o, &ImpliedVolConfig::default()).unwrap();
            prop_assert!((v_imp - v).abs() < 1e-9, "v={} v_imp={}", v, v_imp);
        }
    }
}
