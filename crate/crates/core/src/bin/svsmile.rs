//! Command-line front end. Exit codes: 0 ok, 1 numerical or check failure,
//! 2 configuration error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use svsmile::bs::OptionKind;
use svsmile::checks::{run_checks, suite_name, CheckReport};
use svsmile::config::{Experiment, Format, RuleName, RunConfig, Suite};
use svsmile::error::{Error, Result};
use svsmile::simulate::{run_simulation, SimulationOutput};
use svsmile::smile::{price, smile, PriceResult};

#[derive(Parser)]
#[command(
    name = "svsmile",
    version,
    about = "Option prices and smiles under lognormal stochastic volatility"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one option.
    Price(Common),
    /// Implied volatilities over a strike grid.
    Smile(Common),
    /// Run the consistency suites; exits 1 if any fails.
    Check(CheckArgs),
    /// Market experiments: arbitrage, replication or price paths.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    spot: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    sigma_hat: Option<f64>,
    #[arg(long)]
    expiry: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: `SVSMILE_THREADS`, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Suites to run; repeatable.
    #[arg(long = "suite", value_enum)]
    suites: Vec<SuiteArg>,
    /// Grid-function file to test in place of the computed correction.
    #[arg(long)]
    candidate: Option<PathBuf>,
    #[arg(long)]
    write_candidate: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentArg>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    grid_function: Option<PathBuf>,
    #[arg(long)]
    paths_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Call,
    Put,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    PdeResidual,
    Boundary,
    OracleEquivalence,
    Arbitrage,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Arbitrage,
    Replication,
    Paths,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    NaiveBs,
    SmileEngine,
    GridFunction,
}

fn load(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let m = &mut cfg.market;
    m.spot = c.spot.unwrap_or(m.spot);
    m.v0 = c.v0.unwrap_or(m.v0);
    m.sigma_hat = c.sigma_hat.unwrap_or(m.sigma_hat);
    m.rate = c.rate.unwrap_or(m.rate);
    if let Some(k) = c.strike {
        cfg.price.strike = k;
    }
    if let Some(t) = c.expiry {
        cfg.price.expiry = t;
        cfg.smile.expiry = t;
        cfg.check.expiry = t;
        cfg.simulate.expiry = t;
    }
    if let Some(k) = c.kind {
        cfg.price.kind = match k {
            Kind::Call => OptionKind::Call,
            Kind::Put => OptionKind::Put,
        };
    }
    if c.seed.is_some() {
        cfg.numerics.seed = c.seed;
        cfg.simulate.seed = c.seed;
    }
    if let Some(n) = c.n_paths {
        if c.seed.is_none() && cfg.numerics.seed.is_none() {
            return Err(Error::Config("--n-paths needs a seed".into()));
        }
        cfg.numerics.n_paths = n;
        cfg.simulate.n_paths = n;
    }
    if let Some(f) = c.format {
        cfg.output.format = match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        };
    }
    if c.output.is_some() {
        cfg.output.path = c.output.clone();
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `f` on a pool sized by `threads`, else `SVSMILE_THREADS`, else all cores.
fn with_threads<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let n = match cfg.threads {
        Some(n) => n,
        None => match std::env::var("SVSMILE_THREADS") {
            Ok(s) => s.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!(
                    "SVSMILE_THREADS must be a positive integer, got {s:?}"
                ))
            })?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?
        .install(f)
}

fn output(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output.path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn json<T: serde::Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_rows(mut w: impl Write, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(&mut w);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(header).map_err(err)?;
    for r in rows {
        out.write_record(r).map_err(err)?;
    }
    out.flush()?;
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x:.17e}")
}

fn cmd_price(cfg: &RunConfig) -> Result<bool> {
    let spec = svsmile::bs::OptionSpec::new(cfg.price.strike, cfg.price.expiry, cfg.price.kind)
        .map_err(svsmile::config::config_err)?;
    let r: PriceResult = price(
        &spec,
        &cfg.market.state()?,
        &cfg.market.params()?,
        &cfg.numerics,
    )?;
    let w = output(cfg)?;
    match cfg.output.format {
        Format::Json => json(w, &r)?,
        Format::Csv => csv_rows(
            w,
            &[
                "kind",
                "strike",
                "expiry",
                "price",
                "H",
                "H_BS",
                "u",
                "std_error",
            ],
            &[vec![
                format!("{:?}", r.kind).to_lowercase(),
                f(r.strike),
                f(r.expiry),
                f(r.price),
                f(r.h),
                f(r.h_bs),
                f(r.u),
                f(r.u_std_error),
            ]],
        )?,
    }
    Ok(true)
}

fn cmd_smile(cfg: &RunConfig) -> Result<bool> {
    let strikes = cfg.smile.strike_grid()?;
    let curve = smile(
        &strikes,
        cfg.smile.expiry,
        &cfg.market.state()?,
        &cfg.market.params()?,
        &cfg.numerics,
    )?;
    let w = output(cfg)?;
    match cfg.output.format {
        Format::Json => json(w, &curve)?,
        Format::Csv => curve.write_csv(w)?,
    }
    Ok(true)
}

fn cmd_check(cfg: &RunConfig) -> Result<bool> {
    let report: CheckReport = run_checks(cfg)?;
    let w = output(cfg)?;
    match cfg.output.format {
        Format::Json => json(w, &report)?,
        Format::Csv => csv_rows(
            w,
            &["suite", "passed", "seconds", "failures"],
            &report
                .suites
                .iter()
                .map(|s| {
                    vec![
                        suite_name(s.suite).to_string(),
                        s.passed.to_string(),
                        format!("{:.3}", s.seconds),
                        s.failures.join("; "),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
    }
    for failure in report.failures() {
        eprintln!("FAIL {failure}");
    }
    Ok(report.passed)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<bool> {
    let out = run_simulation(cfg)?;
    let w = output(cfg)?;
    match (cfg.output.format, &out) {
        (Format::Json, _) => json(w, &out)?,
        (Format::Csv, SimulationOutput::Replication(s)) => csv_rows(
            w,
            &[
                "dt",
                "t_stop",
                "rms_accumulated",
                "mean",
                "std_error",
                "rms_step",
                "skipped",
                "total_steps",
                "ratio",
            ],
            &s.levels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    vec![
                        f(l.dt),
                        f(l.t_stop),
                        f(l.rms_accumulated),
                        f(l.accumulated.mean),
                        f(l.accumulated.std_error),
                        f(l.rms_step),
                        l.skipped.to_string(),
                        l.total_steps.to_string(),
                        if i == 0 {
                            String::new()
                        } else {
                            f(s.ratios[i - 1])
                        },
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
        (Format::Csv, SimulationOutput::Arbitrage(a)) => csv_rows(
            w,
            &[
                "dt",
                "pnl",
                "std_error",
                "t_stat",
                "predicted",
                "predicted_std_error",
            ],
            &[vec![
                f(a.dt),
                f(a.pnl.mean),
                f(a.pnl.std_error),
                f(a.t_stat),
                f(a.predicted.mean),
                f(a.predicted.std_error),
            ]],
        )?,
        (
            Format::Csv,
            SimulationOutput::Paths {
                rule,
                n_paths,
                steps,
            },
        ) => csv_rows(
            w,
            &["rule", "n_paths", "steps"],
            &[vec![rule.clone(), n_paths.to_string(), steps.to_string()]],
        )?,
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.command {
        Command::Price(c) | Command::Smile(c) => load(c)?,
        Command::Check(a) => {
            let mut cfg = load(&a.common)?;
            if !a.suites.is_empty() {
                cfg.check.suites = a
                    .suites
                    .iter()
                    .map(|s| match s {
                        SuiteArg::PdeResidual => Suite::PdeResidual,
                        SuiteArg::Boundary => Suite::Boundary,
                        SuiteArg::OracleEquivalence => Suite::OracleEquivalence,
                        SuiteArg::Arbitrage => Suite::Arbitrage,
                    })
                    .collect();
            }
            if a.candidate.is_some() {
                cfg.check.candidate = a.candidate.clone();
            }
            if a.write_candidate.is_some() {
                cfg.check.write_candidate = a.write_candidate.clone();
            }
            cfg
        }
        Command::Simulate(a) => {
            let mut cfg = load(&a.common)?;
            let s = &mut cfg.simulate;
            if let Some(e) = a.experiment {
                s.experiment = match e {
                    ExperimentArg::Arbitrage => Experiment::Arbitrage,
                    ExperimentArg::Replication => Experiment::Replication,
                    ExperimentArg::Paths => Experiment::Paths,
                };
            }
            if let Some(r) = a.rule {
                s.rule = match r {
                    RuleArg::NaiveBs => RuleName::NaiveBs,
                    RuleArg::SmileEngine => RuleName::SmileEngine,
                    RuleArg::GridFunction => RuleName::GridFunction,
                };
            }
            s.steps = a.steps.unwrap_or(s.steps);
            if a.grid_function.is_some() {
                s.grid_function = a.grid_function.clone();
            }
            if a.paths_csv.is_some() {
                s.paths_csv = a.paths_csv.clone();
            }
            cfg
        }
    };
    with_threads(&cfg, || match cli.command {
        Command::Price(_) => cmd_price(&cfg),
        Command::Smile(_) => cmd_smile(&cfg),
        Command::Check(_) => cmd_check(&cfg),
        Command::Simulate(_) => cmd_simulate(&cfg),
    })
}

fn exit_code(r: Result<bool>) -> u8 {
    match r {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(exit_code(run(Cli::parse())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use svsmile::fd::GridFunction;

    fn code(args: &[&str]) -> u8 {
        let mut full = vec!["svsmile"];
        full.extend_from_slice(args);
        exit_code(run(Cli::try_parse_from(full).unwrap()))
    }

    fn json_file(path: &std::path::Path) -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn flat_price_is_black_scholes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p.json");
        let args = [
            "price",
            "--strike",
            "100",
            "--spot",
            "100",
            "--v0",
            "0.04",
            "--sigma-hat",
            "0",
            "--expiry",
            "1",
        ];
        let mut a = args.to_vec();
        a.extend(["--output", out.to_str().unwrap()]);
        assert_eq!(code(&a), 0);
        let v = json_file(&out);
        assert!((v["h"].as_f64().unwrap() - 7.9656).abs() < 1e-4);
        assert_eq!(v["h"], v["h_bs"]);
        assert_eq!(v["u"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn seeds_are_mandatory() {
        assert_eq!(
            code(&["price", "--sigma-hat", "0.5", "--n-paths", "100"]),
            2
        );
        assert_eq!(code(&["price", "--sigma-hat", "0", "--n-paths", "100"]), 2);
        assert_eq!(code(&["price", "--sigma-hat", "0.5"]), 2);
        assert_eq!(code(&["simulate", "--sigma-hat", "0.5"]), 2);
    }

    #[test]
    fn bad_configuration_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[market]\nspto = 3\n").unwrap();
        assert_eq!(code(&["price", "--config", cfg.to_str().unwrap()]), 2);
        assert_eq!(code(&["price", "--v0=-1"]), 2);
        assert_eq!(code(&["price", "--config", "/nonexistent/c.toml"]), 2);
    }

    #[test]
    fn call_and_put_share_the_correction() {
        let dir = tempfile::tempdir().unwrap();
        let mut u = Vec::new();
        for kind in ["call", "put"] {
            let out = dir.path().join(format!("{kind}.json"));
            let a = [
                "price",
                "--sigma-hat",
                "0.5",
                "--seed",
                "5",
                "--n-paths",
                "256",
                "--kind",
                kind,
                "--strike",
                "105",
                "--output",
                out.to_str().unwrap(),
            ];
            assert_eq!(code(&a), 0);
            let v = json_file(&out);
            u.push((v["u"].clone(), v["u_std_error"].clone()));
        }
        assert_eq!(u[0], u[1]);
    }

    #[test]
    fn smile_output_is_reproducible_across_threads() {
        let dir = tempfile::tempdir().unwrap();
        let run_with = |threads: &str, name: &str| {
            let out = dir.path().join(name);
            let a = [
                "smile",
                "--sigma-hat",
                "0.5",
                "--seed",
                "9",
                "--n-paths",
                "200",
                "--format",
                "csv",
                "--threads",
                threads,
                "--output",
                out.to_str().unwrap(),
            ];
            assert_eq!(code(&a), 0);
            std::fs::read(out).unwrap()
        };
        let one = run_with("1", "a.csv");
        assert_eq!(one, run_with("3", "b.csv"));
        let text = String::from_utf8(one).unwrap();
        assert!(text.starts_with("strike,price,implied_vol,u,H_BS,std_error,at_money"));
        assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);
    }

    #[test]
    fn flat_smile_is_flat() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.json");
        assert_eq!(
            code(&["smile", "--v0", "0.09", "--output", out.to_str().unwrap()]),
            0
        );
        let v = json_file(&out);
        for p in v["points"].as_array().unwrap() {
            assert!((p["implied_vol"].as_f64().unwrap() - 0.09).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_check_passes_quickly() {
        let start = std::time::Instant::now();
        assert_eq!(
            code(&[
                "check",
                "--sigma-hat",
                "0",
                "--seed",
                "1",
                "--output",
                "/dev/null"
            ]),
            0
        );
        assert!(start.elapsed().as_secs_f64() < 10.0);
    }

    #[test]
    fn corrupted_candidate_fails_the_residual_check() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(
            &cfg,
            "[market]\nsigma_hat = 0.5\n[fd]\nz_extent = 4.0\nnz = 81\nny = 41\nnt = 64\nstored_layers = 17\n",
        )
        .unwrap();
        let good = dir.path().join("good.svgf");
        let base = [
            "check",
            "--config",
            cfg.to_str().unwrap(),
            "--suite",
            "pde-residual",
            "--output",
            "/dev/null",
        ];
        let mut a = base.to_vec();
        a.extend(["--write-candidate", good.to_str().unwrap()]);
        assert_eq!(code(&a), 0);
        let mut a = base.to_vec();
        a.extend(["--candidate", good.to_str().unwrap()]);
        assert_eq!(code(&a), 0);

        let mut g = GridFunction::read_binary(std::fs::File::open(&good).unwrap()).unwrap();
        let (nt, ny, nz) = g.dims();
        let idx = ((nt / 2) * ny + ny / 2) * nz + nz / 4;
        g.values[idx] += 1e-2;
        let bad = dir.path().join("bad.svgf");
        g.write_binary(std::fs::File::create(&bad).unwrap())
            .unwrap();
        let mut a = base.to_vec();
        a.extend(["--candidate", bad.to_str().unwrap()]);
        assert_eq!(code(&a), 1);
    }

    #[test]
    fn replication_study_writes_one_row_per_level() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.csv");
        let a = [
            "simulate",
            "--experiment",
            "replication",
            "--sigma-hat",
            "0.5",
            "--seed",
            "2",
            "--n-paths",
            "64",
            "--steps",
            "80",
            "--format",
            "csv",
            "--output",
            out.to_str().unwrap(),
        ];
        assert_eq!(code(&a), 0);
        let text = std::fs::read_to_string(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
    }
}
