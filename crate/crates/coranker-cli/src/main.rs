use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use coranker_cli::commands;
use coranker_cli::error::CliError;

/// Collaborative passage reranking: sliding-window passes, strategy
/// comparison, and training-data factories, against simulators or live
/// endpoints.
#[derive(Parser)]
#[command(name = "coranker", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rerank the dataset with one strategy; writes a TREC run and
    /// per-query call-count records.
    Rerank {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a run file against qrels: per-query NDCG@k plus the mean.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = coranker::defaults::METRIC_K)]
        k: usize,
        /// Write the TSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a supervised fine-tuning dataset of perfect-ranking targets.
    BuildSft {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build a filtered preference-pair dataset for DPO training.
    BuildDpo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several strategies over one dataset and tabulate quality vs
    /// cost.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic fixture and run the comparison on bundled
    /// simulators; fully deterministic for a given seed.
    Simulate {
        #[arg(long, default_value_t = coranker::defaults::SEED)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        queries: usize,
        #[arg(long, default_value_t = coranker::defaults::DEPTH)]
        depth: usize,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rerank { config } => commands::rerank::run(&config),
        Command::Eval { run, qrels, k, output } => {
            commands::eval::run(&run, &qrels, k, output.as_deref())
        }
        Command::BuildSft { config } => commands::datasets::build_sft(&config),
        Command::BuildDpo { config } => commands::datasets::build_dpo(&config),
        Command::Compare { config } => commands::compare::run(&config),
        Command::Simulate { seed, queries, depth, output_dir } => {
            commands::simulate::run(seed, queries, depth, &output_dir)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
