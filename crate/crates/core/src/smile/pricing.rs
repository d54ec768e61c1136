//! Prices `H = H_BS + u` and implied-variance smiles.

use serde::{Deserialize, Serialize};

use super::frequency::{reconstruct, FrequencyGrid, Reconstruction, SpectralFilter};
use super::montecarlo::{unit_spectra, KernelConfig, Probe, UnitSpectra};
use super::source::TransformConfig;
use crate::bs::{
    bs_price, bs_vega_v, implied_vol, DiscountedOption, ImpliedVolConfig, MarketParams, Moneyness,
    OptionKind, OptionSpec,
};
use crate::error::{Error, Result};
use crate::volpath::{simulate_paths, RngSeed, TimeGrid};

/// Numerical settings of the correction engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub omega_max: f64,
    pub d_omega: f64,
    pub n_paths: usize,
    pub time_steps: usize,
    pub tail_eps: f64,
    pub z_max: f64,
    pub theta_nodes_per_decade: usize,
    pub seed: Option<u64>,
    pub reconstruction: Reconstruction,
    pub spectral_filter: SpectralFilter,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            omega_max: 120.0,
            d_omega: 0.25,
            n_paths: 10_000,
            time_steps: 256,
            tail_eps: 1e-12,
            z_max: 60.0,
            theta_nodes_per_decade: 40,
            seed: None,
            reconstruction: Reconstruction::HalfLine,
            spectral_filter: SpectralFilter::None,
        }
    }
}

impl NumericsConfig {
    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        Ok(FrequencyGrid::new(self.omega_max, self.d_omega)?.with_filter(self.spectral_filter))
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig {
            transform: TransformConfig {
                tail_eps: self.tail_eps,
                z_max: self.z_max,
            },
            theta_nodes_per_decade: self.theta_nodes_per_decade,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frequency_grid()?;
        if self.n_paths == 0 || self.time_steps == 0 {
            return Err(Error::Config(
                "n_paths and time_steps must be positive".into(),
            ));
        }
        if !(self.tail_eps > 0.0 && self.tail_eps < 1.0) || !(self.z_max > 0.0) {
            return Err(Error::Config("need 0 < tail_eps < 1 and z_max > 0".into()));
        }
        if self.theta_nodes_per_decade < 4 {
            return Err(Error::Config(
                "theta_nodes_per_decade must be at least 4".into(),
            ));
        }
        Ok(())
    }

    fn seed_for(&self, sigma_hat: f64) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None if sigma_hat == 0.0 => Ok(0),
            None => Err(Error::Config(
                "a seed is required for stochastic runs".into(),
            )),
        }
    }
}

/// Spot, current variance and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub spot: f64,
    pub v: f64,
    pub t: f64,
}

impl MarketState {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::InvalidInput(format!(
                "spot must be > 0, got {}",
                self.spot
            )));
        }
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::InvalidInput(format!(
                "variance must be > 0, got {}",
                self.v
            )));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "time must be >= 0, got {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Unit spectra at `(v, t)` for expiry `T`; `None` when the correction vanishes
/// identically (`σ̂ = 0` or `t = T`).
pub fn correction_spectra(
    expiry: f64,
    v: f64,
    t: f64,
    sigma_hat: f64,
    numerics: &NumericsConfig,
    probes: &[Probe],
) -> Result<Option<UnitSpectra>> {
    numerics.validate()?;
    if sigma_hat == 0.0 || t >= expiry {
        return Ok(None);
    }
    let seed = numerics.seed_for(sigma_hat)?;
    let grid = TimeGrid::uniform(t, expiry, numerics.time_steps)?;
    let batch = simulate_paths(v, t, sigma_hat, grid, numerics.n_paths, RngSeed::new(seed))?;
    unit_spectra(
        &numerics.frequency_grid()?,
        expiry,
        &batch,
        probes,
        &numerics.kernel(),
    )
    .map(Some)
}

/// Correction values and standard errors at `zs`, per unit `½σ̂²K̃`.
pub(crate) fn unit_correction(
    spectra: Option<&UnitSpectra>,
    zs: &[f64],
    mode: Reconstruction,
) -> Result<Vec<(f64, f64)>> {
    let Some(sp) = spectra else {
        return Ok(vec![(0.0, 0.0); zs.len()]);
    };
    let u = reconstruct(&sp.negative, &sp.positive, zs, mode)?;
    Ok(zs
        .iter()
        .zip(u)
        .map(|(&z, u)| {
            let se = sp
                .probes
                .iter()
                .find(|(p, _)| p.z == z && p.weights == mode.side_weights(z))
                .map_or(f64::NAN, |(_, e)| e.std_error);
            (u, se)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceDiagnostics {
    pub z: f64,
    pub n_paths: usize,
    pub reconstruction: Reconstruction,
    /// `|U|` at `±Ω` relative to its maximum, worst side.
    pub tail_ratio: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub kind: OptionKind,
    pub strike: f64,
    pub expiry: f64,
    /// Undiscounted price `e^{rt} H`.
    pub price: f64,
    pub h: f64,
    pub h_bs: f64,
    pub u: f64,
    pub u_std_error: f64,
    pub diagnostics: PriceDiagnostics,
}

/// Prices one option at the market state.
pub fn price(
    spec: &OptionSpec,
    state: &MarketState,
    params: &MarketParams,
    numerics: &NumericsConfig,
) -> Result<PriceResult> {
    params.validate()?;
    state.validate()?;
    if state.t > spec.expiry {
        return Err(Error::InvalidInput(format!(
            "t = {} is after expiry {}",
            state.t, spec.expiry
        )));
    }
    let disc = params.discounting();
    let opt = spec.discounted(params.r);
    let x = disc.stock(state.spot, state.t);
    let m = Moneyness::from_spot(x, opt.k_tilde, state.v, state.t);
    let mode = numerics.reconstruction;
    let probes = [Probe::reconstructed(m.z, mode)];
    let spectra = correction_spectra(
        spec.expiry,
        state.v,
        state.t,
        params.sigma_hat,
        numerics,
        &probes,
    )?;
    let scale = 0.5 * params.sigma_hat * params.sigma_hat * opt.k_tilde;
    let (u, se) = unit_correction(spectra.as_ref(), &[m.z], mode)?[0];
    let h_bs = bs_price(&m, &opt);
    let h = h_bs + scale * u;
    Ok(PriceResult {
        kind: spec.kind,
        strike: spec.strike,
        expiry: spec.expiry,
        price: disc.undiscount_price(h, state.t),
        h,
        h_bs,
        u: scale * u,
        u_std_error: scale * se,
        diagnostics: PriceDiagnostics {
            z: m.z,
            n_paths: spectra.as_ref().map_or(0, |s| s.n_paths),
            reconstruction: mode,
            tail_ratio: spectra.as_ref().map_or(0.0, |s| {
                s.negative.tail_ratio().max(s.positive.tail_ratio())
            }),
            theta_max: spectra.as_ref().map_or(0.0, |s| s.theta_max),
        },
    })
}

/// One strike of a smile. The implied variance is taken from the
/// out-of-the-money option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmilePoint {
    pub strike: f64,
    pub kind: OptionKind,
    /// Undiscounted price.
    pub price: f64,
    pub implied_vol: Option<f64>,
    pub implied_vol_std_error: Option<f64>,
    pub u: f64,
    #[serde(rename = "H_BS")]
    pub h_bs: f64,
    pub std_error: f64,
    pub at_money: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileCurve {
    pub spot: f64,
    pub v: f64,
    pub t: f64,
    pub expiry: f64,
    pub r: f64,
    pub sigma_hat: f64,
    pub points: Vec<SmilePoint>,
    /// The strike `e^{r(T-t)} S(t)`, whether or not it is in `points`.
    pub at_money: SmilePoint,
    /// Mean second difference of implied variance in log-strike.
    pub curvature: Option<f64>,
}

/// Relative distance in log-moneyness treated as at the money.
const AT_MONEY_Z: f64 = 1e-10;

/// Implied-variance smile across `strikes` for one expiry.
pub fn smile(
    strikes: &[f64],
    expiry: f64,
    state: &MarketState,
    params: &MarketParams,
    numerics: &NumericsConfig,
) -> Result<SmileCurve> {
    params.validate()?;
    state.validate()?;
    if strikes.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::InvalidInput("strikes must be positive".into()));
    }
    if !(state.t < expiry) {
        return Err(Error::Degenerate("t = T"));
    }
    let disc = params.discounting();
    let x = disc.stock(state.spot, state.t);
    let atm_strike = disc.at_money_strike(state.spot, state.t, expiry);
    let mut all_strikes = strikes.to_vec();
    all_strikes.push(atm_strike);
    let zs: Vec<f64> = all_strikes
        .iter()
        .map(|&k| {
            let z = (x / disc.strike(k, expiry)).ln();
            if z.abs() < AT_MONEY_Z {
                0.0
            } else {
                z
            }
        })
        .collect();
    let mode = numerics.reconstruction;
    let probes: Vec<Probe> = zs.iter().map(|&z| Probe::reconstructed(z, mode)).collect();
    let spectra = correction_spectra(
        expiry,
        state.v,
        state.t,
        params.sigma_hat,
        numerics,
        &probes,
    )?;
    let unit = unit_correction(spectra.as_ref(), &zs, mode)?;
    let iv_cfg = ImpliedVolConfig::default();

    let mut points: Vec<SmilePoint> = all_strikes
        .iter()
        .zip(&zs)
        .zip(&unit)
        .map(|((&strike, &z), &(u_unit, se_unit))| {
            let k_tilde = disc.strike(strike, expiry);
            let kind = if z <= 0.0 {
                OptionKind::Call
            } else {
                OptionKind::Put
            };
            let opt = DiscountedOption::new(k_tilde, expiry, kind);
            let scale = 0.5 * params.sigma_hat * params.sigma_hat * k_tilde;
            let m = Moneyness::from_log(z, k_tilde, state.v, state.t);
            let h_bs = bs_price(&m, &opt);
            let u = scale * u_unit;
            let se = scale * se_unit;
            let h = h_bs + u;
            let (implied, implied_se, error) = match implied_vol(h, x, state.t, &opt, &iv_cfg) {
                Ok(iv) => {
                    let vega = bs_vega_v(&Moneyness { v: iv, ..m }, &opt);
                    (Some(iv), Some(se / vega), None)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            SmilePoint {
                strike,
                kind,
                price: disc.undiscount_price(h, state.t),
                implied_vol: implied,
                implied_vol_std_error: implied_se,
                u,
                h_bs: disc.undiscount_price(h_bs, state.t),
                std_error: disc.undiscount_price(se, state.t),
                at_money: z == 0.0,
                error,
            }
        })
        .collect();
    let at_money = points.pop().expect("at-money point appended");

    let curvature = {
        let mut pts: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| p.implied_vol.map(|iv| (p.strike.ln(), iv)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let seconds: Vec<f64> = pts
            .windows(3)
            .filter(|w| w[2].0 > w[0].0)
            .map(|w| {
                let (h1, h2) = (w[1].0 - w[0].0, w[2].0 - w[1].0);
                2.0 * ((w[2].1 - w[1].1) / h2 - (w[1].1 - w[0].1) / h1) / (h1 + h2)
            })
            .collect();
        (!seconds.is_empty()).then(|| seconds.iter().sum::<f64>() / seconds.len() as f64)
    };

    Ok(SmileCurve {
        spot: state.spot,
        v: state.v,
        t: state.t,
        expiry,
        r: params.r,
        sigma_hat: params.sigma_hat,
        points,
        at_money,
        curvature,
    })
}

impl SmileCurve {
    /// CSV with columns `strike,price,implied_vol,u,H_BS,std_error,at_money`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "strike",
            "price",
            "implied_vol",
            "u",
            "H_BS",
            "std_error",
            "at_money",
        ])
        .map_err(crate::volpath::csv_err)?;
        for p in &self.points {
            out.write_record([
                format!("{:.17e}", p.strike),
                format!("{:.17e}", p.price),
                p.implied_vol
                    .map_or_else(|| "NaN".to_string(), |v| format!("{v:.17e}")),
                format!("{:.17e}", p.u),
                format!("{:.17e}", p.h_bs),
                format!("{:.17e}", p.std_error),
                p.at_money.to_string(),
            ])
            .map_err(crate::volpath::csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma_hat: f64) -> MarketParams {
        MarketParams::new(0.03, 100.0, 0.04, sigma_hat).unwrap()
    }

    fn small(seed: u64) -> NumericsConfig {
        NumericsConfig {
            omega_max: 20.0,
            d_omega: 0.1,
            n_paths: 512,
            time_steps: 32,
            seed: Some(seed),
            ..NumericsConfig::default()
        }
    }

    #[test]
    fn no_vol_of_vol_is_black_scholes() {
        let state = MarketState {
            spot: 100.0,
            v: 0.04,
            t: 0.0,
        };
        let spec = OptionSpec::new(105.0, 1.0, OptionKind::Call).unwrap();
        let r = price(&spec, &state, &params(0.0), &NumericsConfig::default()).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.h, r.h_bs);
        let curve = smile(
            &[80.0, 100.0, 120.0],
            1.0,
            &state,
            &params(0.0),
            &NumericsConfig::default(),
        )
        .unwrap();
        for p in curve.points.iter().chain([&curve.at_money]) {
            assert!((p.implied_vol.unwrap() - 0.04).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_required_when_stochastic() {
        let state = MarketState {
            spot: 100.0,
            v: 0.04,
            t: 0.0,
        };
        let spec = OptionSpec::new(100.0, 1.0, OptionKind::Call).unwrap();
        let err = price(&spec, &state, &params(0.5), &NumericsConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn call_and_put_share_the_correction() {
        let state = MarketState {
            spot: 100.0,
            v: 0.04,
            t: 0.0,
        };
        let num = small(1);
        let c = price(
            &OptionSpec::new(95.0, 1.0, OptionKind::Call).unwrap(),
            &state,
            &params(0.5),
            &num,
        )
        .unwrap();
        let p = price(
            &OptionSpec::new(95.0, 1.0, OptionKind::Put).unwrap(),
            &state,
            &params(0.5),
            &num,
        )
        .unwrap();
        assert_eq!(c.u.to_bits(), p.u.to_bits());
        assert_eq!(c.u_std_error.to_bits(), p.u_std_error.to_bits());
        assert!(c.u != 0.0);
    }

    #[test]
    fn terminal_correction_is_zero() {
        let state = MarketState {
            spot: 90.0,
            v: 0.04,
            t: 1.0,
        };
        let spec = OptionSpec::new(100.0, 1.0, OptionKind::Put).unwrap();
        let r = price(&spec, &state, &params(0.5), &small(1)).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.price - 10.0).abs() < 1e-12);
    }

    #[test]
    fn correction_scales_with_strike_and_source() {
        // ½σ̂²K̃ multiplies a strike-free profile evaluated at the same z.
        let num = small(4);
        let state = MarketState {
            spot: 100.0,
            v: 0.04,
            t: 0.0,
        };
        let p = params(0.5);
        let a = price(
            &OptionSpec::new(100.0, 1.0, OptionKind::Call).unwrap(),
            &state,
            &p,
            &num,
        )
        .unwrap();
        let state2 = MarketState {
            spot: 200.0,
            ..state
        };
        let b = price(
            &OptionSpec::new(200.0, 1.0, OptionKind::Call).unwrap(),
            &state2,
            &p,
            &num,
        )
        .unwrap();
        assert!((b.u - 2.0 * a.u).abs() < 1e-12 * a.u.abs());
    }

    #[test]
    fn smile_csv_has_flagged_row() {
        let state = MarketState {
            spot: 100.0,
            v: 0.04,
            t: 0.0,
        };
        let p = params(0.5);
        let atm = p.discounting().at_money_strike(100.0, 0.0, 1.0);
        let curve = smile(&[90.0, atm, 110.0], 1.0, &state, &p, &small(2)).unwrap();
        assert!(curve.points[1].at_money);
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().ends_with("true"));
    }
}
