//! `handlm` command-line entry point. [`run`] parses arguments, resolves the
//! layered [`RunConfig`] and dispatches to one subcommand.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

pub mod commands;
pub mod config;
pub mod provenance;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Domain(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<handlm_nn::NnError> for CliError {
    fn from(e: handlm_nn::NnError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<handlm_core::dataset::DatasetError> for CliError {
    fn from(e: handlm_core::dataset::DatasetError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<handlm_core::metrics::MetricError> for CliError {
    fn from(e: handlm_core::metrics::MetricError) -> Self {
        CliError::Domain(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "handlm", version, about = "Bimanual hand-motion data, tokenizer and text-motion language model")]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Global seed; every random choice derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Checkpoint directory (default `checkpoints`).
    #[arg(long, global = true, value_name = "DIR")]
    pub checkpoints: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic captioned corpus.
    GenData(GenDataArgs),
    /// Filter and smooth a dataset.
    Curate(CurateArgs),
    /// Re-caption a dataset through the two-stage annotation pipeline.
    Annotate(AnnotateArgs),
    /// Train the motion tokenizer.
    TrainTokenizer(TrainTokenizerArgs),
    /// Train one language-model stage.
    TrainLm(TrainLmArgs),
    /// Text to motion.
    Generate(GenerateArgs),
    /// Motion to text.
    Caption(CaptionArgs),
    /// Metric report for a held-out dataset.
    Evaluate(EvaluateArgs),
    /// Convert a `.hmw` motion to JSON, CSV or joint keypoints.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub num: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Frames per sequence.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClientKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub client: Option<ClientKind>,
    /// Completion endpoint for the http client; the key is read from HANDLM_ANNOTATION_KEY.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub prompts: Option<PathBuf>,
    /// Closed verb-noun vocabulary as JSON.
    #[arg(long, value_name = "FILE")]
    pub vocabulary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainTokenizerArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Checkpoint file (default `<checkpoints>/tokenizer.safetensors`).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Pretrain,
    Refine,
    Instruct,
}

impl StageArg {
    pub fn stage(self) -> handlm_nn::lm::train::Stage {
        use handlm_nn::lm::train::Stage;
        match self {
            StageArg::Pretrain => Stage::Pretrain,
            StageArg::Refine => Stage::Refine,
            StageArg::Instruct => Stage::Instruct,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long, value_enum)]
    pub stage: StageArg,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub tokenizer: Option<PathBuf>,
    /// Checkpoint to continue from (default: the previous stage's output).
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Model size for a fresh pretraining run: tiny or small.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Language-model checkpoint (default: latest stage in the checkpoint directory).
    #[arg(long, value_name = "FILE")]
    pub lm: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub tokenizer: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub text: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Sample at this temperature instead of decoding greedily.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long, value_name = "FILE")]
    pub motion: PathBuf,
    /// Also write `{"caption": …}` JSON here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    T2m,
    M2t,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Held-out dataset.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Report directory (default `reports`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Frozen evaluator; trained on --train-data and saved here when missing
    /// (default `<checkpoints>/evaluator.safetensors`).
    #[arg(long, value_name = "FILE")]
    pub evaluator: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    Csv,
    Keypoints,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub motion: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

impl Cli {
    /// Defaults, then the config file, then global flags, then the environment.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = &self.checkpoints {
            cfg.paths.checkpoints = c.clone();
        }
        cfg.finish()
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Command::GenData(a) => commands::data::gen_data(cfg, a),
        Command::Curate(a) => commands::data::curate(cfg, a),
        Command::Annotate(a) => commands::data::annotate(cfg, a),
        Command::TrainTokenizer(a) => commands::train::train_tokenizer(cfg, a),
        Command::TrainLm(a) => commands::train::train_lm(cfg, a),
        Command::Generate(a) => commands::infer::generate(cfg, a),
        Command::Caption(a) => commands::infer::caption(cfg, a),
        Command::Evaluate(a) => commands::evaluate::evaluate(cfg, a),
        Command::Export(a) => commands::infer::export(cfg, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["handlm", "gen-data", "--num", "3", "--out", "x", "--bogus"]), 2);
        assert_eq!(run(["handlm", "no-such-command"]), 2);
        assert_eq!(run(["handlm", "train-lm", "--stage", "finetune", "--data", "d"]), 2);
        assert_eq!(run(["handlm", "--help"]), 0);
    }

    #[test]
    fn seed_flag_is_accepted_after_the_subcommand() {
        let cli = Cli::try_parse_from(["handlm", "gen-data", "--num", "10", "--seed", "1", "--out", "d/"]).unwrap();
        assert_eq!(cli.resolve().unwrap().seed, 1);
    }

    #[test]
    fn missing_config_file_is_a_usage_error() {
        assert_eq!(run(["handlm", "--config", "/nonexistent/run.toml", "gen-data", "--num", "1", "--out", "x"]), 2);
    }
}
