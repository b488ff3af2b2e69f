use std::path::PathBuf;
use std::process::ExitCode;

use cli::run;
use clap::Parser;

/// Reconstruct a piecewise constant source from noisy observations by
/// quasi-solutions with a discrepancy-principle radius, for several noise levels.
#[derive(Debug, Parser)]
#[command(name = "quasisol", version)]
struct Cli {
    /// JSON config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cells per axis (use 128 for the full-size study).
    #[arg(long)]
    n: Option<usize>,
    /// Interpret --n as vertices per axis instead of cells.
    #[arg(long)]
    n_is_vertices: bool,
    /// Potential coefficient c > 0.
    #[arg(long)]
    c: Option<f64>,
    /// Discrepancy factor tau > 1.
    #[arg(long)]
    tau: Option<f64>,
    /// Initial radius and phase I increment.
    #[arg(long)]
    rho0: Option<f64>,
    /// Comma separated noise percentages.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON phantom description.
    #[arg(long)]
    phantom: Option<PathBuf>,
    /// Mass matrix in the optimality system: lumped or consistent.
    #[arg(long)]
    mass: Option<String>,
    /// -v for phase progress, -vv for Newton iterations.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

mod cli {
    use std::fs;

    use quasisol::experiment::{run_experiment, ExperimentConfig, Phantom};
    use quasisol::{Error, MassKind, Result};

    use super::Cli;

    pub fn run(cli: &Cli) -> Result<bool> {
        let mut cfg: ExperimentConfig<f64> = match &cli.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = cli.n {
            cfg.n = n;
        }
        cfg.n_is_vertices |= cli.n_is_vertices;
        if let Some(c) = cli.c {
            cfg.c = c;
        }
        if let Some(tau) = cli.tau {
            cfg.tau = tau;
        }
        if let Some(rho0) = cli.rho0 {
            cfg.rho0 = rho0;
        }
        if let Some(noise) = &cli.noise {
            cfg.noise = noise.clone();
        }
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(path) = &cli.phantom {
            let p: Phantom<f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
            cfg.phantom = p;
        }
        if let Some(mass) = &cli.mass {
            cfg.mass = match mass.as_str() {
                "lumped" => MassKind::Lumped,
                "consistent" => MassKind::Consistent,
                other => return Err(Error::InvalidArgument(format!("unknown mass kind '{other}'"))),
            };
        }
        let records = run_experiment(&cfg, Some(&cli.out))?;
        println!("{:>8} {:>11} {:>11} {:>8} {:>11} {:>11} {:>11}  ok", "s", "delta", "d", "rho", "err_inf", "err_l2", "<xi,e>");
        for r in &records {
            println!(
                "{:>8.0e} {:>11.3e} {:>11.3e} {:>8.3} {:>11.3e} {:>11.3e} {:>11.3e}  {}",
                r.s, r.delta, r.discrepancy, r.rho, r.err_inf, r.err_l2, r.bregman_pair, r.success
            );
        }
        Ok(records.iter().all(|r| r.success))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("at least one radius choice failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
