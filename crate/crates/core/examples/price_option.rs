//! Prices one call with the smile engine and compares it to Black-Scholes.
//!
//! ```bash
//! cargo run --release --example price_option
//! ```

use svsmile::bs::{MarketParams, OptionKind, OptionSpec};
use svsmile::smile::{price, MarketState, NumericsConfig};

fn main() -> svsmile::Result<()> {
    let params = MarketParams::new(0.03, 100.0, 0.04, 0.5)?;
    let state = MarketState {
        spot: 100.0,
        v: 0.04,
        t: 0.0,
    };
    let numerics = NumericsConfig {
        seed: Some(7),
        ..NumericsConfig::default()
    };
    for (k, kind) in [
        (90.0, OptionKind::Put),
        (100.0, OptionKind::Call),
        (110.0, OptionKind::Call),
    ] {
        let opt = OptionSpec::new(k, 1.0, kind)?;
        let r = price(&opt, &state, &params, &numerics)?;
        println!(
            "{kind:?} K={k}: H = {:.5}  H_BS = {:.5}  u = {:+.5} ± {:.1e}",
            r.h, r.h_bs, r.u, r.u_std_error
        );
    }
    Ok(())
}
