//! Builds an implied-variance smile across strikes and writes it as CSV.
//!
//! ```bash
//! cargo run --release --example smile_curve > smile.csv
//! ```

use svsmile::bs::MarketParams;
use svsmile::smile::{smile, MarketState, NumericsConfig};

fn main() -> svsmile::Result<()> {
    let params = MarketParams::new(0.0, 100.0, 0.04, 0.8)?;
    let state = MarketState {
        spot: 100.0,
        v: 0.04,
        t: 0.0,
    };
    let numerics = NumericsConfig {
        seed: Some(11),
        ..NumericsConfig::default()
    };
    let strikes: Vec<f64> = (0..17).map(|i| 70.0 + 3.75 * i as f64).collect();
    let curve = smile(&strikes, 1.0, &state, &params, &numerics)?;
    curve.write_csv(std::io::stdout().lock())?;
    let atm = &curve.at_money;
    eprintln!(
        "at-money implied variance {:?} (v0 = 0.04)",
        atm.implied_vol
    );
    Ok(())
}
