use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod io;
mod rank;
mod train;

#[derive(Debug, Parser)]
#[command(name = "sparse-ce", version, about = "Sparse cross-encoder kernels, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time and memory of random-input forward passes.
    Bench(bench::BenchArgs),
    /// Train a toy model on the synthetic term-overlap task.
    Train(train::TrainArgs),
    /// Write a synthetic validation collection (vocab, queries, docs, candidates, qrels).
    Synth(train::SynthArgs),
    /// Re-rank a candidate run with a saved model.
    Rerank(rank::RerankArgs),
    /// Paired TOST on per-query nDCG@k of two runs.
    Tost(rank::TostArgs),
}

/// Optional output file; stdout when absent.
#[derive(Debug, Clone, clap::Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl Output {
    fn write(&self, text: &str) -> anyhow::Result<()> {
        match &self.output {
            Some(path) => std::fs::write(path, text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => bench::run(args),
        Command::Train(args) => train::run(args),
        Command::Synth(args) => train::synth(args),
        Command::Rerank(args) => rank::rerank(args),
        Command::Tost(args) => rank::tost(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
