//! `agrimuse`: corpus generation, embedding synthesis, training and evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use agrimuse::corpus::SplitName;
use agrimuse::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agrimuse", version, about = "Hierarchical text-to-museum retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic museum corpus, its descriptions and split.
    GenCorpus(GenCorpusArgs),
    /// Synthesize frame, video-model and sentence embeddings for a corpus.
    GenEmbeddings(GenEmbeddingsArgs),
    /// Train one model variant into runs/<name>/.
    Train(TrainArgs),
    /// Evaluate a run or build a baseline report.
    Eval(EvalArgs),
    /// Execute the experiment grid listed in a config file.
    Run(RunArgs),
}

#[derive(clap::Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of museums (default 457).
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory (default ./data).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct GenEmbeddingsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by gen-corpus (default ./data).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Modality gap: weight of the visual center in topic sentences.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma_v: Option<f64>,
    #[arg(long)]
    pub sigma_t: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Output directory (default: the corpus directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// HL, HL_skip_adapter, HL_early_fusion, HL_late_fusion, NHL_museum, NHL_video_museum or NHL_room_museum.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub run_name: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Replace an existing run of the same name.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EvalMode {
    Trained,
    Zeroshot,
    Transfer,
    /// Trains and compares image, video-model, early- and late-fusion models.
    Fusion,
}

impl EvalMode {
    fn name(self) -> &'static str {
        match self {
            EvalMode::Trained => "trained",
            EvalMode::Zeroshot => "zeroshot",
            EvalMode::Transfer => "transfer",
            EvalMode::Fusion => "fusion",
        }
    }
}

#[derive(clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run_name: String,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long, value_enum, default_value = "trained")]
    pub mode: EvalMode,
    /// Overrides the data directory recorded in the run.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Corpus seed of the held-out corpus (transfer mode).
    #[arg(long)]
    pub heldout_seed: Option<u64>,
    /// Museums in the held-out corpus (default: size of the split).
    #[arg(long)]
    pub heldout_count: Option<usize>,
}

#[derive(clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub run_name: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(a),
        Command::GenEmbeddings(a) => commands::gen_embeddings(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Run(a) => commands::cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
