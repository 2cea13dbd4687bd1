//! `towe`: tokenizer training, input preparation, training, evaluation,
//! ablation and prediction for target-oriented opinion word extraction.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "towe", version, about = "Target-oriented opinion word extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn BPE merges and a vocabulary from the words of a dataset.
    TrainVocab(TrainVocabArgs),
    /// Tokenize and encode a dataset into a JSON-lines dump.
    Prepare(PrepareArgs),
    /// Train one model per seed and write checkpoints.
    Train(TrainArgs),
    /// Score checkpoints on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Compare S, SA and masked-S checkpoints on one test set.
    Ablate(AblateArgs),
    /// Tag opinion spans in unlabeled examples.
    Predict(PredictArgs),
    /// Generate a synthetic corpus with a matching vocabulary.
    Synth(SynthArgs),
    /// Convert the tab-separated TOWE distribution format to JSON lines.
    ConvertTsv(ConvertArgs),
}

#[derive(Args)]
struct TokenizerArgs {
    /// Vocabulary file, one piece per line.
    #[arg(long)]
    vocab: PathBuf,
    /// BPE merge file; WordPiece is used when absent.
    #[arg(long)]
    merges: Option<PathBuf>,
}

#[derive(Args)]
struct TrainVocabArgs {
    /// Dataset in the JSON-lines schema; opinions may be omitted.
    #[arg(long)]
    corpus: PathBuf,
    /// Number of merges to learn.
    #[arg(long = "merges")]
    num_merges: usize,
    /// Output directory for merges.txt and vocab.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
    #[arg(long, default_value = "SA")]
    variant: String,
    #[arg(long)]
    mask_aspect: bool,
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long, default_value_t = 256)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Optional test set; when given, report.json holds per-seed test scores.
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
    /// Precomputed features covering every train/dev/test id.
    #[arg(long)]
    features: Option<PathBuf>,
    /// key = value defaults; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// S or SA [default: SA]
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    mask_aspect: bool,
    /// Comma-separated [default: 1,2,3,4,5]
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    use_position: bool,
    #[arg(long)]
    use_segment: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    test: PathBuf,
    /// Checkpoint files or training directories, comma-separated.
    #[arg(long)]
    checkpoint: String,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
    /// Overrides the variant recorded with each checkpoint.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    mask_aspect: bool,
    #[arg(long)]
    features: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
    /// Checkpoints trained on the sentence alone.
    #[arg(long = "s")]
    sentence: String,
    /// Checkpoints trained on sentence-aspect pairs.
    #[arg(long = "sa")]
    pair: String,
    /// Checkpoints trained on the sentence with the aspect masked.
    #[arg(long = "s-masked")]
    masked: String,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// JSON lines; `opinions` may be omitted.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Subword,
    Coreference,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Writes train.jsonl, dev.jsonl, test.jsonl and vocab.txt here.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainVocab(a) => commands::train_vocab(a),
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Synth(a) => commands::synth(a),
        Command::ConvertTsv(a) => commands::convert_tsv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("towe: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
