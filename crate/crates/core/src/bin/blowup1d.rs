use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blowup1d::experiment::{
    certificate_report, certify_blowup, read_config, run_experiment, sweep, ExperimentError,
};
use blowup1d::verify::selftest;

#[derive(Parser)]
#[command(name = "blowup1d", version, about = "Splitting scheme for 1-D reaction-diffusion blow-up")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trace, snapshots and summary.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a subsolution certifying blow-up of the initial data.
    Certify { config: PathBuf },
    /// Run every `*.cfg` in a directory concurrently.
    Sweep {
        dir: PathBuf,
        /// Root for the per-run output directories.
        #[arg(long, default_value = "sweep_output")]
        out: PathBuf,
    },
    /// Randomized checks against the reference oracles.
    Selftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().unwrap_or_default().to_string_lossy();
    PathBuf::from(format!("{stem}_output"))
}

fn run(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run { config, out } => {
            let cfg = read_config(&config)?;
            println!("q = {}", cfg.q);
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| default_out(&config));
            let summary = run_experiment(&cfg, &out)?;
            print!("{}", summary.to_key_values());
            println!("output = {}", out.display());
        }
        Command::Certify { config } => {
            let cfg = read_config(&config)?;
            print!("{}", certificate_report(&certify_blowup(&cfg)?));
        }
        Command::Sweep { dir, out } => {
            let entries = sweep(&dir, &out)?;
            let mut worst: Option<ExperimentError> = None;
            for entry in entries {
                match entry.result {
                    Ok(s) => println!(
                        "{}: {} at t = {} ({})",
                        entry.config.display(),
                        s.termination,
                        s.final_time,
                        entry.out_dir.display()
                    ),
                    Err(e) => {
                        eprintln!("{}: {e}", entry.config.display());
                        if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                            worst = Some(e);
                        }
                    }
                }
            }
            if let Some(e) = worst {
                return Err(e);
            }
        }
        Command::Selftest { seed } => {
            let mut failed = false;
            for check in selftest(seed) {
                let status = if check.passed { "pass" } else { "FAIL" };
                println!("{status} {}: {}", check.name, check.detail);
                failed |= !check.passed;
            }
            if failed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
