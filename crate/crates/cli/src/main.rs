//! `contxt`: context-vector activation steering experiments end to end.
//!
//! One config file drives a run; subcommands compose the pipeline:
//! generate data, train models, extract contexts, evaluate, sweep, and emit
//! generation records. Identical configs and seeds produce byte-identical
//! output trees (timestamps live only in the sweep manifests).
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 cache error,
//! 5 internal error.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "contxt", about = "Context-vector activation steering pipeline")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "contxt.toml")]
    config: PathBuf,

    /// Override the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the domain-shift dataset and the sentiment corpus.
    GenData,
    /// Train models from the generated data.
    Train {
        /// Which model to train: mlp, transformer, or all.
        #[arg(long, default_value = "all")]
        model: String,
    },
    /// Extract and cache context vectors.
    ExtractContext,
    /// Evaluate the classifier on the test split, optionally steered.
    Eval,
    /// Run the grid sweep and the generation sweep, emitting tables.
    Sweep,
    /// Emit steered rewrite records for the held-out prompts.
    Generate,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = RunConfig::load(&cli.config, cli.seed, cli.out)?;
    match cli.command {
        Command::GenData => pipeline::cmd_gen_data(&config),
        Command::Train { model } => {
            if !["mlp", "transformer", "all"].contains(&model.as_str()) {
                return Err(contxt_core::Error::Config(format!(
                    "unknown model {model:?}: expected mlp, transformer, or all"
                ))
                .into());
            }
            pipeline::cmd_train(&config, &model)
        }
        Command::ExtractContext => pipeline::cmd_extract_context(&config),
        Command::Eval => pipeline::cmd_eval(&config),
        Command::Sweep => pipeline::cmd_sweep(&config),
        Command::Generate => pipeline::cmd_generate(&config),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use contxt_core::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(
            Error::Data(_)
            | Error::EmptyContextSet
            | Error::Vocab { .. }
            | Error::ContextLength { .. }
            | Error::Dimension { .. }
            | Error::Tap { .. }
            | Error::Format(_),
        ) => 3,
        Some(Error::CacheMiss { .. } | Error::CacheFormat(_)) => 4,
        Some(Error::Io(_)) | None => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
