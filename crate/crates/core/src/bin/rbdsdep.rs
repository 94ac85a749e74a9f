use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbdsdep::config::{load_config, CONFIG_GRAMMAR};
use rbdsdep::dsl::GRAMMAR;
use rbdsdep::runner::run_with_threads;

#[derive(Parser)]
#[command(name = "rbdsdep", version, about = "Reflected doubly stochastic BSDE laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `outputs.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        verbose: bool,
    },
    /// Load and validate a config file, then print its hash.
    ValidateConfig { file: PathBuf },
    /// Print the expression and config grammars.
    Grammar,
}

fn init_logging(verbose: bool) {
    let level = if verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Grammar => {
            println!("expression grammar\n\n{GRAMMAR}\n\nconfig grammar (TOML)\n\n{CONFIG_GRAMMAR}");
            ExitCode::SUCCESS
        }
        Command::ValidateConfig { file } => {
            init_logging(false);
            match load_config(&file) {
                Ok(cfg) => {
                    println!("ok {}", cfg.hash());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Run {
            config,
            out,
            threads,
            verbose,
        } => {
            init_logging(verbose);
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = out.unwrap_or_else(|| cfg.outputs.dir.clone());
            match run_with_threads(&cfg, &dir, threads) {
                Ok(outcome) => {
                    let verdict = if outcome.passed { "passed" } else { "FAILED" };
                    println!("{verdict}: {} files in {}", outcome.files.len(), dir.display());
                    if outcome.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
