use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use noisytree_cli::config::ExperimentConfig;
use noisytree_cli::runner::{
    self, parse_results_csv, render_summary_csv, summarize, RunFailure,
};
use noisytree_core::verification::{verify_theorems, VerifyScale};
use noisytree_openml::Client;

/// Decision-tree label-noise study harness.
#[derive(Parser)]
#[command(name = "noisytree", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download one OpenML dataset into the cache (no-op when cached).
    Fetch {
        #[arg(long)]
        id: u32,
        #[arg(long, default_value = "openml-cache")]
        cache: PathBuf,
    },
    /// Execute the configured experiment grid and write the results CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for grid cells; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Record real per-fold wall times instead of zeros. Off by default
        /// so result files are byte-stable across runs and machines.
        #[arg(long)]
        timings: bool,
    },
    /// Run the self-check suites for the correction and robustness claims.
    Verify {
        /// Full scale: 100 random instances per suite instead of 25.
        #[arg(long)]
        full: bool,
    },
    /// Aggregate a raw results CSV into per-cell mean and std.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

// Exit codes: 0 ok, 1 validation, 2 runtime, 3 verification failure.
const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Fetch { id, cache } => {
            let client = Client::http();
            match client.fetch(id, &cache) {
                Ok(outcome) => {
                    if let Some(warning) = &outcome.warning {
                        eprintln!("warning: {warning}");
                    }
                    println!(
                        "{} ({})",
                        outcome.path.display(),
                        if outcome.from_cache { "cached" } else { "downloaded" }
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Run {
            config,
            out,
            workers,
            timings,
        } => {
            let config = match ExperimentConfig::from_file(&config) {
                Ok(config) => config,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            let out = out.unwrap_or_else(|| config.output_path.clone());
            match runner::run_experiment(&config, &out, workers, timings) {
                Ok(summary) => {
                    println!("{} records -> {}", summary.records, summary.out.display());
                    ExitCode::SUCCESS
                }
                Err(RunFailure::Validation(msg)) => {
                    eprintln!("error: {msg}");
                    ExitCode::from(EXIT_VALIDATION)
                }
                Err(RunFailure::Runtime(msg)) => {
                    eprintln!("error: {msg}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Verify { full } => {
            let scale = if full {
                VerifyScale::Full
            } else {
                VerifyScale::Quick
            };
            let report = verify_theorems(scale);
            print!("{}", report.render());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Command::Summarize { input, out } => {
            let text = match std::fs::read_to_string(&input) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", input.display());
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let records = match parse_results_csv(&text) {
                Ok(records) => records,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let rows = summarize(&records);
            let rendered = render_summary_csv(&rows);
            if let Err(e) = std::fs::write(&out, rendered) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
            println!("{} cells -> {}", rows.len(), out.display());
            ExitCode::SUCCESS
        }
    }
}
