//! One Fourier mode of the correction two ways: a path functional of the
//! variance process and a Crank-Nicolson solve in ln v.

use num_complex::Complex64;
use svsmile::bs::{DiscountedOption, OptionKind};
use svsmile::fd::{solve_parab_u, Axis};
use svsmile::smile::{KernelConfig, SourceAlongPaths};
use svsmile::volpath::{exp_functional, simulate_paths, RngSeed, TimeGrid};
use svsmile::Side;

fn main() -> svsmile::Result<()> {
    let (sigma_hat, expiry, v0) = (0.5, 1.0, 0.04);
    let opt = DiscountedOption::new(100.0, expiry, OptionKind::Call);
    let batch = simulate_paths(
        v0,
        0.0,
        sigma_hat,
        TimeGrid::uniform(0.0, expiry, 256)?,
        20_000,
        RngSeed::new(42),
    )?;
    let y = Axis::new(1e-4f64.ln(), 4f64.ln(), 257)?;
    for omega in [0.0, 2.0, 8.0] {
        let src = SourceAlongPaths::new(
            Side::Positive,
            omega,
            0.25,
            &opt,
            sigma_hat,
            4.0,
            &KernelConfig::default(),
        )?;
        let lambda = Complex64::new(-0.5 * omega * omega, -0.5 * omega);
        let mc = exp_functional(&batch, lambda, |v, s| src.eval(v, s))?;
        let pde = -solve_parab_u(
            omega,
            &y,
            |v, t| src.eval(v, t),
            sigma_hat,
            expiry,
            0.0,
            512,
            2,
        )?
        .value_at(v0, 0)?;
        println!(
            "ω = {omega}: paths {:.4e} ± {:.1e}, PDE {:.4e}",
            mc.mean, mc.std_error, pde
        );
    }
    Ok(())
}
