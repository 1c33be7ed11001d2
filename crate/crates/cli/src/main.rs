//! `dict-transfer`: train a target tokenizer from a bilingual dictionary, map
//! its subwords onto a source model's subwords and initialize embeddings.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ConfigFile, PipelineArgs};

const THREADS_ENV: &str = "DICT_TRANSFER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dict-transfer", version, about)]
struct Cli {
    /// Worker threads for alignment and embedding (0 = all cores).
    /// Overrides DICT_TRANSFER_THREADS and the config file.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat TOML config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a byte-level BPE tokenizer on the dictionary entries.
    TrainTokenizer {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output file (default: <out-dir>/tokenizer.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and write all artifacts to --out-dir.
    Transfer {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Count subwords in a corpus (one document per line).
    Count {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
    },
    /// Print coverage and per-iteration tables from a mapping file.
    Report { mapping: PathBuf },
    /// Convert an external tokenizer (vocab.json + merges.txt, or tokenizer.json).
    ConvertTokenizer {
        #[arg(long, requires = "merges", conflicts_with = "hf_json")]
        vocab: Option<PathBuf>,
        #[arg(long, requires = "vocab")]
        merges: Option<PathBuf>,
        #[arg(long)]
        hf_json: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or config: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn resolve_threads(flag: Option<usize>, file: &ConfigFile) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("{THREADS_ENV}: expected a number, got {v:?}")))?;
        return Ok(Some(n));
    }
    Ok(file.threads)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = resolve_threads(cli.threads, &file)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
        log::debug!("using {} worker threads", rayon::current_num_threads());
    }
    match cli.command {
        Command::TrainTokenizer { pipeline, out } => commands::train_tokenizer(&pipeline, &file, out),
        Command::Transfer { pipeline } => commands::transfer(&pipeline, &file),
        Command::Count { corpus, tokenizer } => commands::count(&corpus, &tokenizer),
        Command::Report { mapping } => commands::report(&mapping),
        Command::ConvertTokenizer {
            vocab,
            merges,
            hf_json,
            out,
        } => commands::convert_tokenizer(vocab, merges, hf_json, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
