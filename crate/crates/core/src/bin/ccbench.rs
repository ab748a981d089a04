//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
//! completion backend failed or a run aborted, 3 for I/O and corrupted-file
//! errors.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ccbench::backends::{content_hash, BackendError, ReplayCache};
use ccbench::ccparse::CommitClass;
use ccbench::eval::{round_metric, MetricsSummary};
use ccbench::miner::{self, MinerError};
use ccbench::runner::{
    self, ExperimentConfig, RunnerError, REPORT_CSV_FILE, REPORT_JSON_FILE, REPORT_MARKDOWN_FILE,
};

#[derive(Parser)]
#[command(
    name = "ccbench",
    version,
    about = "Benchmark commit-type classification over git history"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a class-balanced labeled dataset from a git repository
    Mine {
        /// Git repository to mine
        repo: PathBuf,
        /// Total number of samples to draw, balanced across the seven types
        #[arg(long, default_value_t = 3200)]
        size: usize,
        /// Sampling seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep each commit's message (minus its type prefix) in the dataset
        #[arg(long)]
        include_message: bool,
        /// Where to write the dataset (JSON Lines)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment described by a TOML config
    Run {
        /// Experiment config file
        #[arg(long)]
        config: PathBuf,
        /// Reuse predictions from an interrupted run log in the output dir
        #[arg(long)]
        resume: bool,
    },
    /// Render a report from an existing run log
    Report {
        /// Run log written by `ccbench run`
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect a completion cache
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(ValueEnum, Clone, Copy)]
enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Print entry counts per backend
    Stats {
        /// Cache file (JSON Lines)
        file: PathBuf,
    },
    /// Print one cached completion text
    Get {
        /// Cache file (JSON Lines)
        file: PathBuf,
        /// Backend id the completion was recorded under
        backend: String,
        /// Cache key (SHA-256 of the prompt text)
        key: String,
    },
    /// Print the cache key for a prompt file's exact contents
    Hash {
        /// File holding the prompt text
        prompt: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(
        "{0} of {1} backend/strategy pair(s) aborted; fix the backend and rerun with --resume"
    )]
    Aborted(usize, usize),
}

fn miner_exit_code(error: &MinerError) -> i32 {
    match error {
        MinerError::Io(_) | MinerError::GitCommand { .. } => 3,
        _ => 1,
    }
}

fn backend_exit_code(error: &BackendError) -> i32 {
    match error {
        BackendError::InvalidSpec { .. } => 1,
        BackendError::Io(_) | BackendError::CacheCorrupt { .. } => 3,
        _ => 2,
    }
}

fn runner_exit_code(error: &RunnerError) -> i32 {
    match error {
        RunnerError::Config(_)
        | RunnerError::ResumeMismatch { .. }
        | RunnerError::Prompt(_)
        | RunnerError::Eval(_) => 1,
        RunnerError::LogCorrupt { .. } | RunnerError::Io(_) => 3,
        RunnerError::Dataset(e) => miner_exit_code(e),
        RunnerError::Backend(e) => backend_exit_code(e),
    }
}

fn exit_code(error: &CliError) -> i32 {
    match error {
        CliError::Miner(e) => miner_exit_code(e),
        CliError::Runner(e) => runner_exit_code(e),
        CliError::Backend(e) => backend_exit_code(e),
        CliError::Io(_) => 3,
        CliError::Aborted(..) => 2,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; only real parse
            // errors are failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    if let Err(error) = execute(cli) {
        eprintln!("error: {error}");
        std::process::exit(exit_code(&error));
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mine {
            repo,
            size,
            seed,
            include_message,
            out,
        } => {
            let dataset = miner::build_dataset(&repo, size, seed, include_message)?;
            miner::write_dataset(&dataset, &out)?;
            println!("wrote {} samples to {}", dataset.len(), out.display());
            for class in CommitClass::ALL {
                println!(
                    "  {:<9} {}",
                    class.as_str(),
                    dataset.per_class_counts.get(&class).copied().unwrap_or(0)
                );
            }
            Ok(())
        }
        Command::Run { config, resume } => {
            let config = ExperimentConfig::load(&config)?;
            let outcome = runner::run_experiment(&config, resume)?;

            println!(
                "wrote {} ({} predictions, {} reused)",
                outcome.log_path.display(),
                outcome.predictions,
                outcome.reused
            );
            for name in [REPORT_JSON_FILE, REPORT_MARKDOWN_FILE, REPORT_CSV_FILE] {
                println!("wrote {}", config.output_dir.join(name).display());
            }
            for run in &outcome.runs {
                let m = MetricsSummary::from(&run.report);
                println!(
                    "{} / {}: accuracy {:.4}, precision {:.4}, recall {:.4}, f1 {:.4}",
                    run.model,
                    run.strategy.display_name(),
                    round_metric(m.accuracy, 4),
                    round_metric(m.precision, 4),
                    round_metric(m.recall, 4),
                    round_metric(m.f1, 4)
                );
            }

            if outcome.aborted.is_empty() {
                Ok(())
            } else {
                for aborted in &outcome.aborted {
                    eprintln!(
                        "aborted {} / {}: {}",
                        aborted.backend,
                        aborted.strategy.display_name(),
                        aborted.error
                    );
                }
                let pairs = outcome.runs.len() + outcome.aborted.len();
                Err(CliError::Aborted(outcome.aborted.len(), pairs))
            }
        }
        Command::Report { log, format, out } => {
            let runs = runner::report_from_log(&log)?;
            let text = match format {
                ReportFormat::Json => runner::render_report_json(&runs),
                ReportFormat::Csv => runner::render_report_csv(&runs),
                ReportFormat::Markdown => runner::render_report_markdown(&runs),
            };
            match out {
                Some(path) => {
                    std::fs::write(&path, text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Cache { command } => match command {
            CacheCommand::Stats { file } => {
                let cache = ReplayCache::open(&file)?;
                println!(
                    "{} entr{}",
                    cache.len(),
                    if cache.len() == 1 { "y" } else { "ies" }
                );
                for (backend, count) in cache.backend_counts() {
                    println!("  {backend}: {count}");
                }
                Ok(())
            }
            CacheCommand::Get { file, backend, key } => {
                let cache = ReplayCache::open(&file)?;
                match cache.get(&backend, &key) {
                    Some(entry) => {
                        print!("{}", entry.text);
                        Ok(())
                    }
                    None => Err(BackendError::CacheMiss { backend, key }.into()),
                }
            }
            CacheCommand::Hash { prompt } => {
                let text = std::fs::read_to_string(&prompt)?;
                println!("{}", content_hash(&text));
                Ok(())
            }
        },
    }
}
