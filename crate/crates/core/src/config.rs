//! Run configuration shared by the command-line tool and the examples.
//!
//! Every section has defaults and rejects unknown keys. Anything stochastic
//! needs an explicit seed.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::bs::{MarketParams, OptionKind, OptionSpec};
use crate::error::{Error, Result};
use crate::fd::FdGrids;
use crate::market::{ReplicationConfig, StrategyConfig};
use crate::smile::{MarketState, NumericsConfig};
use crate::table::TableSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub rate: f64,
    pub spot: f64,
    pub v0: f64,
    pub sigma_hat: f64,
    /// Valuation time.
    pub t: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            rate: 0.0,
            spot: 100.0,
            v0: 0.04,
            sigma_hat: 0.0,
            t: 0.0,
        }
    }
}

impl MarketSection {
    pub fn params(&self) -> Result<MarketParams> {
        MarketParams::new(self.rate, self.spot, self.v0, self.sigma_hat).map_err(config_err)
    }

    pub fn state(&self) -> Result<MarketState> {
        let s = MarketState {
            spot: self.spot,
            v: self.v0,
            t: self.t,
        };
        s.validate().map_err(config_err)?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSection {
    pub strike: f64,
    pub expiry: f64,
    pub kind: OptionKind,
}

impl Default for PriceSection {
    fn default() -> Self {
        Self {
            strike: 100.0,
            expiry: 1.0,
            kind: OptionKind::Call,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmileSection {
    pub expiry: f64,
    /// Explicit strikes; when empty, `n_strikes` evenly spaced from
    /// `strike_min` to `strike_max`.
    pub strikes: Vec<f64>,
    pub strike_min: f64,
    pub strike_max: f64,
    pub n_strikes: usize,
}

impl Default for SmileSection {
    fn default() -> Self {
        Self {
            expiry: 1.0,
            strikes: Vec::new(),
            strike_min: 70.0,
            strike_max: 130.0,
            n_strikes: 13,
        }
    }
}

impl SmileSection {
    pub fn strike_grid(&self) -> Result<Vec<f64>> {
        if !self.strikes.is_empty() {
            return Ok(self.strikes.clone());
        }
        if self.n_strikes < 2 || !(self.strike_max > self.strike_min && self.strike_min > 0.0) {
            return Err(Error::Config(
                "need n_strikes >= 2 and 0 < strike_min < strike_max".into(),
            ));
        }
        let h = (self.strike_max - self.strike_min) / (self.n_strikes - 1) as f64;
        Ok((0..self.n_strikes)
            .map(|i| self.strike_min + i as f64 * h)
            .collect())
    }
}

/// Boundary treatment of the finite-difference oracle in `check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleDomain {
    /// Each half-line with `G = 0` at the money.
    Dirichlet,
    /// Each side's source alone on the whole line.
    ExtendByZero,
    /// The full source on the whole line.
    WholeLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    PdeResidual,
    Boundary,
    OracleEquivalence,
    Arbitrage,
}

/// Pass/fail thresholds of `check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckTolerances {
    /// Least observed convergence order of the Black–Scholes residual.
    pub pde_order_min: f64,
    /// Largest interior residual of a supplied or computed correction surface.
    pub pde_residual_max: f64,
    /// Boundary value bound `max(se_mult SE, value_rel max|u|)`.
    pub boundary_se_mult: f64,
    pub boundary_value_rel: f64,
    pub boundary_slope_rel: f64,
    /// Engine vs grid bound `se_mult SE + rel max|G|`.
    pub oracle_se_mult: f64,
    pub oracle_rel: f64,
    /// Least `|t|` of the naive-pricing strategy, and largest `|t|` of the controls.
    pub arbitrage_t_min: f64,
    pub control_t_max: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            pde_order_min: 1.8,
            pde_residual_max: 1e-3,
            boundary_se_mult: 5.0,
            boundary_value_rel: 5e-3,
            boundary_slope_rel: 5e-2,
            oracle_se_mult: 3.0,
            oracle_rel: 1e-2,
            arbitrage_t_min: 5.0,
            control_t_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub suites: Vec<Suite>,
    pub tolerances: CheckTolerances,
    pub expiry: f64,
    /// Variances at which boundary and oracle checks are made.
    pub variances: Vec<f64>,
    /// Grid-function file with a unit correction to test instead of the
    /// computed one.
    pub candidate: Option<PathBuf>,
    /// Where to save the computed correction surface.
    pub write_candidate: Option<PathBuf>,
    /// Largest `|z|` compared in the oracle check.
    pub oracle_z_max: f64,
    /// Defaults to `dirichlet` for half-line reconstruction and `whole_line`
    /// otherwise.
    pub oracle_domain: Option<OracleDomain>,
    pub arbitrage_paths: usize,
    pub arbitrage_steps: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            suites: vec![
                Suite::PdeResidual,
                Suite::Boundary,
                Suite::OracleEquivalence,
                Suite::Arbitrage,
            ],
            tolerances: CheckTolerances::default(),
            expiry: 1.0,
            variances: vec![0.04],
            candidate: None,
            write_candidate: None,
            oracle_z_max: 2.0,
            oracle_domain: None,
            arbitrage_paths: 2000,
            arbitrage_steps: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    NaiveBs,
    SmileEngine,
    GridFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Delta/vega-neutral two-option strategy under naive pricing.
    Arbitrage,
    /// Replication residual with step refinement.
    Replication,
    /// Price paths only.
    Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub experiment: Experiment,
    pub rule: RuleName,
    pub strikes: Vec<f64>,
    pub kinds: Vec<OptionKind>,
    pub expiry: f64,
    /// Number of steps on the finest grid.
    pub steps: usize,
    pub n_paths: usize,
    pub seed: Option<u64>,
    /// Halvings of the step in the replication study; the coarsest step is
    /// `2^halvings` fine steps.
    pub halvings: u32,
    /// Grid-function file with the unit correction for `grid_function`.
    pub grid_function: Option<PathBuf>,
    pub table: TableSpec,
    pub strategy: StrategyConfig,
    pub replication: ReplicationConfig,
    /// Per-path CSV of the first `csv_paths` paths.
    pub paths_csv: Option<PathBuf>,
    pub csv_paths: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            experiment: Experiment::Arbitrage,
            rule: RuleName::NaiveBs,
            strikes: vec![90.0, 110.0],
            kinds: vec![OptionKind::Call, OptionKind::Call],
            expiry: 1.0,
            steps: 500,
            n_paths: 10_000,
            seed: None,
            halvings: 3,
            grid_function: None,
            table: TableSpec::default(),
            strategy: StrategyConfig::default(),
            replication: ReplicationConfig::default(),
            paths_csv: None,
            csv_paths: 10,
        }
    }
}

impl SimulateSection {
    pub fn legs(&self) -> Result<[OptionSpec; 2]> {
        if self.strikes.len() != 2 || self.kinds.len() != 2 {
            return Err(Error::Config(
                "simulate needs exactly two strikes and two kinds".into(),
            ));
        }
        let leg = |i: usize| {
            OptionSpec::new(self.strikes[i], self.expiry, self.kinds[i]).map_err(config_err)
        };
        let legs = [leg(0)?, leg(1)?];
        if legs[0] == legs[1] {
            return Err(Error::Config("the two legs must differ".into()));
        }
        Ok(legs)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("simulate.seed is required".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: Format,
    /// File to write; standard output when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketSection,
    pub numerics: NumericsConfig,
    pub fd: FdGrids,
    pub price: PriceSection,
    pub smile: SmileSection,
    pub check: CheckSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
    /// Worker threads; defaults to `SVSMILE_THREADS`, then to all cores.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks the sections every command relies on.
    pub fn validate(&self) -> Result<()> {
        self.market.params()?;
        self.market.state()?;
        self.numerics.validate().map_err(config_err)?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

/// Re-labels input validation failures as configuration errors.
pub fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) | Error::InvalidGrid(m) => Error::Config(m),
        other => other,
    }
}
