use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uwb_coloc::config::load_config;
use uwb_coloc::exit;
use uwb_coloc::harness::{run, RunError};
use uwb_coloc::report::{compare, parse_seed_range, sweep, SweepError};

#[derive(Parser)]
#[command(name = "uwb-coloc", version, about = "UWB cooperative localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seed and run every configured variant.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Override a config field, e.g. `--set bias.phi_bar=0.5`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Median/IQR table over finished runs of one scenario.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Run seeds `a..b` (end exclusive) in parallel and compare them.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_seed_range)]
        seeds: std::ops::Range<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
}

fn run_error_code(e: &RunError) -> i32 {
    match e {
        RunError::Numerical { .. } => exit::NUMERICAL,
        RunError::Io { .. } => exit::CONFIG,
    }
}

fn main_inner() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
        }
    };
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            mut overrides,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            let cfg = match load_config(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit::CONFIG;
                }
            };
            match run(&cfg, &out) {
                Ok(summary) => {
                    for (v, s) in &summary.variants {
                        println!(
                            "{:<14} final_rmse {:>9} mean_nees {:>9} messages {}",
                            v.as_str(),
                            s.final_rmse.map_or("-".into(), |x| format!("{x:.4}")),
                            s.mean_nees.map_or("-".into(), |x| format!("{x:.3}")),
                            s.belief_messages + s.bias_messages
                        );
                    }
                    exit::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    run_error_code(&e)
                }
            }
        }
        Command::Compare { dirs } => match compare(&dirs) {
            Ok(table) => {
                print!("{table}");
                exit::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit::CONFIG
            }
        },
        Command::Sweep {
            config,
            seeds,
            out,
            overrides,
        } => {
            let cfg = match load_config(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit::CONFIG;
                }
            };
            match sweep(&cfg, seeds, &out) {
                Ok(table) => {
                    print!("{table}");
                    exit::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    match &e {
                        SweepError::Run { source, .. } => run_error_code(source),
                        _ => exit::CONFIG,
                    }
                }
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(main_inner() as u8)
}
