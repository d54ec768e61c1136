//! Runs the finite-difference check suites against the engine.

use svsmile::checks::run_checks;
use svsmile::config::{OracleDomain, RunConfig, Suite};

fn main() -> svsmile::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.market.sigma_hat = 0.5;
    cfg.numerics.seed = Some(17);
    cfg.check.suites = vec![Suite::PdeResidual, Suite::OracleEquivalence];
    cfg.check.variances = vec![0.04];
    cfg.check.oracle_domain = Some(OracleDomain::ExtendByZero);
    let report = run_checks(&cfg)?;
    for s in &report.suites {
        println!("{:?}: passed = {} in {:.1} s", s.suite, s.passed, s.seconds);
        for f in s.failures.iter().take(5) {
            println!("  {f}");
        }
    }
    Ok(())
}
