//! `disentangle`: synthesize, train, predict, evaluate, ensemble and inspect
//! conversation disentanglement data and models.

mod commands;
mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use settings::Switch;

#[derive(Parser, Debug)]
#[command(name = "disentangle", version, about = "Conversation disentanglement for IRC-style chat logs")]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Context window flags shared by training and prediction. Each falls back
/// to the config file, then (for prediction) to the model's saved settings,
/// then to the default shown.
#[derive(Args, Debug, Clone, Default)]
pub struct WindowArgs {
    /// Candidate slots per target, self pair included [default: 50]
    #[arg(long)]
    context_range: Option<usize>,
    /// Following messages offered as extra candidates [default: 0]
    #[arg(long)]
    future: Option<usize>,
    /// Longest joined pair, in tokens [default: 100]
    #[arg(long)]
    max_seq_len: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic corpus of interleaved conversations.
    Synth(SynthArgs),
    /// Train a DialBERT, linear or feedforward ranker.
    Train(TrainArgs),
    /// Predict reply-to parents and write annotated files.
    Predict(PredictArgs),
    /// Score predicted files against gold files.
    Evaluate(EvaluateArgs),
    /// Predict with several models combined.
    Ensemble(EnsembleArgs),
    /// Corpus statistics per split.
    Stats(StatsArgs),
    /// Print the pair feature schema.
    Features,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value file supplying any of the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 20]
    #[arg(long)]
    channels: Option<usize>,
    /// Conversations per channel [default: 3]
    #[arg(long)]
    conversations: Option<usize>,
    /// Messages per conversation [default: 30]
    #[arg(long)]
    messages: Option<usize>,
    /// Size of the keyword theme pool [default: 6]
    #[arg(long)]
    themes: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    words_per_theme: Option<usize>,
    /// Speakers per conversation [default: 3]
    #[arg(long)]
    speakers: Option<usize>,
    /// Nicks shared by all channels [default: 40]
    #[arg(long)]
    speaker_pool: Option<usize>,
    /// Chance of a join line before each message [default: 0.03]
    #[arg(long)]
    join_rate: Option<f64>,
    /// Chance that a reply names its parent's speaker [default: 0.3]
    #[arg(long)]
    address_rate: Option<f64>,
    /// Channels written to `out/dev` (the rest go to `out/train` when a
    /// split is requested) [default: 0]
    #[arg(long)]
    dev: Option<usize>,
    /// Channels written to `out/test` [default: 0]
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Annotated training file or directory.
    #[arg(long)]
    data: PathBuf,
    /// Development data used to keep the best epoch.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output model directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// dialbert, linear or feedforward [default: dialbert]
    #[arg(long)]
    kind: Option<String>,
    #[command(flatten)]
    window: WindowArgs,
    /// Conversation loss weight [default: 0.1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Initialization and dropout seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Example order seed [default: 0]
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Append pair features to DialBERT encodings [default: off]
    #[arg(long)]
    features: Option<Switch>,
    /// Context aggregator [default: on]
    #[arg(long)]
    aggregator: Option<Switch>,
    /// [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Targets per step [default: 4]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Encoder width [default: 64]
    #[arg(long)]
    width: Option<usize>,
    /// Encoder layers [default: 2]
    #[arg(long)]
    layers: Option<usize>,
    /// Attention heads [default: 4]
    #[arg(long)]
    heads: Option<usize>,
    /// Encoder feed-forward width [default: 128]
    #[arg(long)]
    ff_width: Option<usize>,
    /// Aggregator hidden size per direction [default: 32]
    #[arg(long)]
    hidden: Option<usize>,
    /// [default: 0.1]
    #[arg(long)]
    dropout: Option<f64>,
    /// Masked-token/next-message pre-training epochs before fine-tuning
    /// [default: 0]
    #[arg(long)]
    posttrain_epochs: Option<usize>,
    /// Minimum token count for the vocabulary [default: 1]
    #[arg(long)]
    min_count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Annotated file or directory to predict (gold columns are ignored).
    #[arg(long)]
    data: PathBuf,
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for predicted files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Gold annotated file or directory.
    #[arg(long)]
    data: PathBuf,
    /// Predicted file or directory, matched to gold by file name.
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model directories or checkpoint files; repeat the flag per model.
    #[arg(long, required = true, num_args = 1..)]
    model: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// model-avg, prob-avg or vote [default: prob-avg]
    #[arg(long)]
    strategy: Option<String>,
    /// With model-avg, also save the averaged model to this directory.
    #[arg(long)]
    save: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Annotated file, directory, or directory with train/dev/test subdirectories.
    #[arg(long)]
    data: PathBuf,
    /// Window size used for the coverage line [default: 50]
    #[arg(long)]
    context_range: Option<usize>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Synth(a) => commands::synth(&a, &mut out),
        Command::Train(a) => commands::train(&a, &mut out),
        Command::Predict(a) => commands::predict(&a, &mut out),
        Command::Evaluate(a) => commands::evaluate(&a, &mut out),
        Command::Ensemble(a) => commands::ensemble(&a, &mut out),
        Command::Stats(a) => commands::stats(&a, &mut out),
        Command::Features => commands::features(&mut out),
    }
}
