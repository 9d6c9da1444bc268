mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use cbsdecode::{Error, SearchParams};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_UNKNOWN_COMMAND: u8 = 64;
pub const EXIT_CONFIG: u8 = 65;
pub const EXIT_DATA: u8 = 66;
pub const EXIT_NUMERIC: u8 = 70;

#[derive(Debug, Parser)]
#[command(name = "cbsdecode", version, about = "Constrained beam search decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a constraint spec and print the machine as JSON.
    Compile(CompileArgs),
    /// Decode every input, writing one JSON result per line.
    Decode(DecodeArgs),
    /// Train an add-alpha n-gram model on a text corpus.
    TrainNgram(TrainNgramArgs),
    /// Train the LSTM caption model on a JSONL corpus.
    TrainLm(TrainLmArgs),
    /// Append words from an embedding file to a trained model.
    Expand(ExpandArgs),
    /// Object-mention precision, recall and F1.
    EvalF1(EvalF1Args),
    /// Exact constrained argmax by enumeration, for tiny instances.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Ngram,
    Neural,
    Uniform,
}

/// Where the vocabulary and scorer come from.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "ngram")]
    pub scorer: ScorerKind,
    /// n-gram JSON or neural checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Word list, one per line (for the uniform scorer).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Embedding file used with --manifest to expand a neural model on load.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Expansion manifest applied on load.
    #[arg(long, requires = "embeddings")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConstraintArgs {
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Tab-separated lemma groups.
    #[arg(long)]
    pub lemmas: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Forbid a token from directly repeating itself (default).
    #[arg(long, overrides_with = "allow_repeat")]
    pub no_repeat: bool,
    #[arg(long, overrides_with = "no_repeat")]
    pub allow_repeat: bool,
    /// Rank finished hypotheses by mean per-token log probability.
    #[arg(long)]
    pub length_normalize: bool,
}

impl SearchArgs {
    pub fn params(&self) -> SearchParams {
        SearchParams {
            beam_size: self.beam,
            max_len: self.max_len,
            no_repeat: !self.allow_repeat,
            length_normalize: self.length_normalize,
        }
    }
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    /// Emit one machine per phrase.
    #[arg(long)]
    pub per_phrase: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// JSONL inputs: {"id": ..., "features": [...], "constraints": {...}}.
    /// Without it a single input with id 0 is decoded.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Decode once per phrase and keep the best accepted run.
    #[arg(long)]
    pub per_phrase: bool,
    /// Include every beam's best finished hypothesis.
    #[arg(long)]
    pub per_state: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Recorded only; decoding is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Maximum number of prefixes to expand per input.
    #[arg(long, default_value_t = cbsdecode::search::DEFAULT_ORACLE_LIMIT)]
    pub limit: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainNgramArgs {
    /// One sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// JSONL lines {"text": "...", "features": [...]}.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalF1Args {
    /// JSONL lines {"generated": "...", "references": ["...", ...]}.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Mention spec object or array of them.
    #[arg(long)]
    pub mentions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of one command, carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = if e.is_numeric() {
            (EXIT_NUMERIC, "numeric")
        } else {
            match e {
                Error::Config(_) | Error::Capacity { .. } => (EXIT_CONFIG, "config"),
                _ => (EXIT_DATA, "data"),
            }
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn report(f: &Failure) -> ExitCode {
    let body = serde_json::json!({
        "error": f.kind,
        "message": f.message,
        "exit_code": f.code,
    });
    eprintln!("{body}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CBSDECODE_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                ErrorKind::InvalidSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
                | ErrorKind::MissingSubcommand => EXIT_UNKNOWN_COMMAND,
                _ => EXIT_CONFIG,
            };
            let f = Failure {
                code,
                kind: if code == EXIT_CONFIG { "config" } else { "usage" },
                message: e.render().to_string().trim_end().to_string(),
            };
            return report(&f);
        }
    };

    let outcome = match cli.command {
        Command::Compile(a) => commands::compile(a),
        Command::Decode(a) => commands::decode(a),
        Command::TrainNgram(a) => commands::train_ngram(a),
        Command::TrainLm(a) => commands::train_lm(a),
        Command::Expand(a) => commands::expand(a),
        Command::EvalF1(a) => commands::eval_f1(a),
        Command::Oracle(a) => commands::oracle(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
