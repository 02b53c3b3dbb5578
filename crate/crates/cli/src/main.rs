//! `wordeval`: word-level evaluation of subword language models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wordeval::error::{Error, Result};

use config::Settings;

#[derive(Parser)]
#[command(name = "wordeval", version, about = "Word-level evaluation of subword language models")]
struct Cli {
    /// Flat TOML file supplying defaults for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Word frequencies, frequency bins and rank-frequency pairs.
    Stats(Settings),
    /// Train skip-gram word vectors on the training corpus.
    TrainEmbeddings(Settings),
    /// Decode every test word and report accuracy, diversity and perplexity.
    Evaluate(Settings),
    /// Re-score a record log with embedding neighbours.
    Softmatch(Settings),
    /// Run paraphrase probes and test frequency dependence.
    Paraphrase(Settings),
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let (cmd, flags): (fn(&Settings) -> Result<()>, Settings) = match cli.command {
        Command::Stats(s) => (commands::stats, s),
        Command::TrainEmbeddings(s) => (commands::train_embeddings, s),
        Command::Evaluate(s) => (commands::evaluate_cmd, s),
        Command::Softmatch(s) => (commands::softmatch, s),
        Command::Paraphrase(s) => (commands::paraphrase, s),
    };
    let settings = flags.over(file);
    if let Some(n) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("`threads`: {e}")))?;
    }
    cmd(&settings)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
