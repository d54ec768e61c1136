//! Market experiments driven by a [`RunConfig`].

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

use crate::bs::OptionSpec;
use crate::config::{config_err, Experiment, RuleName, RunConfig};
use crate::error::{Error, Result};
use crate::fd::GridFunction;
use crate::market::{
    arbitrage_strategy_bs, replication_residual, simulate_market, ArbitrageReport, MarketBatch,
    PricingRule, ReplicationConfig, ReplicationReport,
};
use crate::table::CorrectionTable;

/// Replication residuals on successively halved steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStudy {
    /// Coarsest step first.
    pub levels: Vec<ReplicationReport>,
    /// `rms[k] / rms[k + 1]`; `√2` for an `O(√Δt)` residual.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum SimulationOutput {
    Arbitrage(ArbitrageReport),
    Replication(ReplicationStudy),
    Paths {
        rule: String,
        n_paths: usize,
        steps: usize,
    },
}

/// Runs the replication residual with strides `2^halvings, ..., 2, 1`.
///
/// All levels accumulate up to the same time: `cfg.t_stop`, or two coarse
/// steps before expiry.
pub fn replication_study(
    batch: &MarketBatch,
    rule: &PricingRule,
    legs: [OptionSpec; 2],
    halvings: u32,
    cfg: &ReplicationConfig,
) -> Result<ReplicationStudy> {
    let coarse = 1usize << halvings;
    if !batch.fine_steps().is_multiple_of(coarse) {
        return Err(Error::Config(format!(
            "{} fine steps cannot be halved {halvings} times",
            batch.fine_steps()
        )));
    }
    let cfg = ReplicationConfig {
        t_stop: Some(
            cfg.t_stop
                .unwrap_or(legs[0].expiry - 2.0 * batch.dt(coarse)),
        ),
        ..*cfg
    };
    let levels = (0..=halvings)
        .map(|h| replication_residual(batch, coarse >> h, rule, legs, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let ratios = levels
        .windows(2)
        .map(|w| w[0].rms_accumulated / w[1].rms_accumulated)
        .collect();
    Ok(ReplicationStudy { levels, ratios })
}

/// Builds the pricing rule named in `[simulate]`.
pub fn build_rule(cfg: &RunConfig) -> Result<PricingRule> {
    let sim = &cfg.simulate;
    let sigma_hat = cfg.market.sigma_hat;
    Ok(match sim.rule {
        RuleName::NaiveBs => PricingRule::NaiveBs,
        RuleName::SmileEngine => {
            let tab = CorrectionTable::from_smile_engine(
                &sim.table,
                sim.expiry,
                sigma_hat,
                &cfg.numerics,
            )?;
            PricingRule::SmileEngine(Arc::new(tab))
        }
        RuleName::GridFunction => {
            let path = sim.grid_function.as_ref().ok_or_else(|| {
                Error::Config("rule grid_function needs simulate.grid_function".into())
            })?;
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let grid = GridFunction::read_binary(std::io::BufReader::new(file))?;
            let tab = CorrectionTable::from_grid_function(
                grid,
                sim.expiry,
                sigma_hat,
                cfg.numerics.reconstruction,
            )
            .map_err(config_err)?;
            PricingRule::GridFunction(Arc::new(tab))
        }
    })
}

/// Writes the first `n` priced paths as one CSV table.
pub fn write_paths_csv<W: Write>(
    mut w: W,
    batch: &MarketBatch,
    rule: &PricingRule,
    legs: &[OptionSpec],
    n: usize,
) -> Result<()> {
    for i in 0..n.min(batch.n_paths()) {
        simulate_market(batch, i, 1, rule, legs)?.write_csv(&mut w, i, i == 0)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment configured in `[simulate]`.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let sim = &cfg.simulate;
    let legs = sim.legs()?;
    let batch = MarketBatch::new(
        cfg.market.params()?,
        sim.expiry,
        sim.steps,
        sim.n_paths,
        sim.seed()?,
    )
    .map_err(config_err)?;
    let rule = build_rule(cfg)?;
    if let Some(path) = &sim.paths_csv {
        let f = std::fs::File::create(path)?;
        write_paths_csv(
            std::io::BufWriter::new(f),
            &batch,
            &rule,
            &legs,
            sim.csv_paths,
        )?;
    }
    Ok(match sim.experiment {
        Experiment::Arbitrage => {
            if !matches!(rule, PricingRule::NaiveBs) {
                return Err(Error::Config(
                    "the arbitrage strategy is defined for naive_bs pricing".into(),
                ));
            }
            SimulationOutput::Arbitrage(arbitrage_strategy_bs(&batch, 1, legs, &sim.strategy)?)
        }
        Experiment::Replication => SimulationOutput::Replication(replication_study(
            &batch,
            &rule,
            legs,
            sim.halvings,
            &sim.replication,
        )?),
        Experiment::Paths => SimulationOutput::Paths {
            rule: rule.name().into(),
            n_paths: sim.csv_paths.min(sim.n_paths),
            steps: sim.steps,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::{MarketParams, OptionKind};

    #[test]
    fn study_uses_one_stopping_time() {
        let b = MarketBatch::new(
            MarketParams::new(0.0, 100.0, 0.04, 0.0).unwrap(),
            1.0,
            64,
            64,
            3,
        )
        .unwrap();
        let legs = [
            OptionSpec::new(95.0, 1.0, OptionKind::Call).unwrap(),
            OptionSpec::new(105.0, 1.0, OptionKind::Call).unwrap(),
        ];
        let s = replication_study(
            &b,
            &PricingRule::NaiveBs,
            legs,
            2,
            &ReplicationConfig::default(),
        )
        .unwrap();
        assert_eq!(s.levels.len(), 3);
        assert_eq!(s.ratios.len(), 2);
        assert!(s
            .levels
            .iter()
            .all(|l| (l.t_stop - 1.0 + 2.0 / 16.0).abs() < 1e-12));
        assert!(replication_study(
            &b,
            &PricingRule::NaiveBs,
            legs,
            7,
            &ReplicationConfig::default()
        )
        .is_err());
    }

    #[test]
    fn simulation_needs_a_seed() {
        let cfg = RunConfig::default();
        assert!(matches!(run_simulation(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn paths_csv_has_one_header() {
        let b = MarketBatch::new(
            MarketParams::new(0.0, 100.0, 0.04, 0.3).unwrap(),
            1.0,
            8,
            4,
            3,
        )
        .unwrap();
        let legs = [OptionSpec::new(100.0, 1.0, OptionKind::Call).unwrap()];
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &b, &PricingRule::NaiveBs, &legs, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("path")).count(), 1);
        assert_eq!(text.lines().count(), 1 + 3 * 9);
    }
}
