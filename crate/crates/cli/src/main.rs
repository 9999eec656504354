//! `hsps`: predict, simulate, count and fit heralded single-photon source data.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "hsps", version, about = "Heralded single-photon source coherence toolkit")]
struct Cli {
    /// Print an annotated example configuration and exit.
    #[arg(long)]
    example_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write theory curves (CSV) for the configured source and detectors.
    Predict {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate one time-tag file per pump power.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Count coincidences in tag files (`.htag` binary, `.txt` text).
    Count {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Pump power (mW) for a file without a sidecar.
        #[arg(long)]
        power: Option<f64>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit count summaries (or a fit-problem JSON document).
    Fit {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate, count and fit in one go, and write `report.json`.
    Report {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.example_config {
        print!("{}", config::EXAMPLE);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::config("no subcommand given; see --help"));
    };
    match command {
        Command::Predict { config, out } => {
            let cfg = RunConfig::load(&config)?;
            for p in commands::predict(&cfg, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Simulate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            for p in commands::simulate(&cfg, &out).map_err(|e| e.in_stage("simulate"))? {
                println!("{}", p.display());
            }
        }
        Command::Count {
            config,
            input,
            power,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            for p in commands::count(&cfg, &input, power, &out).map_err(|e| e.in_stage("count"))? {
                println!("{}", p.display());
            }
        }
        Command::Fit { config, input, out } => {
            let cfg = RunConfig::load(&config)?;
            let r = commands::fit_files(&cfg, &input, &out).map_err(|e| e.in_stage("fit"))?.result;
            println!(
                "rate_per_mw = {:.6e} ± {:.2e} /s/mW, tau_d = {:.4} ± {:.4} ns, chi2/dof = {:.3}",
                r.rate_per_mw.value,
                r.rate_per_mw.sigma,
                r.tau_d.value * 1e9,
                r.tau_d.sigma * 1e9,
                r.chi2_dof
            );
            for i in &r.inferred {
                println!("  {} mW: g2c(0) = {:.4e} ± {:.1e}", i.pump_power_mw, i.g2c0, i.sigma);
            }
        }
        Command::Report { config, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::report(&cfg, &out)?;
            println!("{}", out.join("report.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
