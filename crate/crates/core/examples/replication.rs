//! Replication residual under step refinement for naive Black-Scholes and a
//! finite-difference correction table.

use std::sync::Arc;
use svsmile::bs::{MarketParams, OptionKind, OptionSpec};
use svsmile::fd::FdGrids;
use svsmile::market::{MarketBatch, PricingRule, ReplicationConfig};
use svsmile::simulate::replication_study;
use svsmile::smile::Reconstruction;
use svsmile::table::CorrectionTable;

fn main() -> svsmile::Result<()> {
    let sigma_hat = 0.5;
    let legs = [
        OptionSpec::new(90.0, 1.0, OptionKind::Call)?,
        OptionSpec::new(110.0, 1.0, OptionKind::Call)?,
    ];
    let batch = MarketBatch::new(
        MarketParams::new(0.03, 100.0, 0.04, sigma_hat)?,
        1.0,
        400,
        500,
        5,
    )?;
    let grids = FdGrids {
        stored_layers: 33,
        ..FdGrids::default()
    };
    let table = CorrectionTable::from_fd(&grids, 1.0, sigma_hat, Reconstruction::HalfLine, 3.0)?;
    let rules = [
        ("naive", PricingRule::NaiveBs),
        ("fd table", PricingRule::GridFunction(Arc::new(table))),
    ];
    for (name, rule) in rules {
        let s = replication_study(&batch, &rule, legs, 3, &ReplicationConfig::default())?;
        let rms: Vec<String> = s
            .levels
            .iter()
            .map(|l| format!("{:.3e}", l.rms_accumulated))
            .collect();
        println!("{name}: rms {rms:?}, ratios {:.2?}", s.ratios);
    }
    Ok(())
}
