mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tomforge_core::esc_augment::KeywordSource;
use tomforge_core::task_builder::TaskKind;
use tomforge_core::Polarity;

use config::{BackendKind, Config, ReportFormat};
use error::CliError;

/// Build, curate and use cognitive-chain knowledge graphs.
#[derive(Debug, Parser)]
#[command(name = "tomforge", version)]
pub struct Cli {
    /// TOML config file (default: ./tomforge.toml when present)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate candidate pools with the configured backend
    #[command(subcommand)]
    Build(BuildCommand),
    /// Human review of the candidate pool
    #[command(subcommand)]
    Curate(CurateCommand),
    /// Replay the decision log and write the curated graph
    Finalize(FinalizeArgs),
    /// Split graph situations into training and validation sets
    Split(SplitArgs),
    /// Write control-token training data as JSONL
    ExportTraining(ExportArgs),
    /// Produce cognitive chains for a new situation
    Infer(InferArgs),
    /// Score predictions against references
    Eval(EvalArgs),
    /// Support-dialogue context augmentation
    #[command(subcommand)]
    Esc(EscCommand),
    /// Print graph statistics
    Stats(StatsArgs),
}

#[derive(Debug, Subcommand)]
pub enum BuildCommand {
    /// Rewrite events into situations, one per topic
    Situations(SituationsArgs),
    /// Expand kept situations into thoughts, emotions, clues and actions
    Expand,
}

#[derive(Debug, Args)]
pub struct SituationsArgs {
    /// Events file, one event per line (default: paths.events_file)
    #[arg(long, value_name = "FILE")]
    events: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CurateCommand {
    /// Serve the review API over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port to listen on; 0 picks a free one
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// JSON array of {"id","token","expert"} annotators
    #[arg(long, value_name = "FILE")]
    roster: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinalizeArgs {
    /// Finalize even when items are still pending or flagged
    #[arg(long)]
    force: bool,
    /// Print statistics as JSON instead of a table
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Fraction of situations assigned to training
    #[arg(long, default_value_t = 0.9)]
    ratio: f64,
    /// Shuffle seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Validation,
    All,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Output JSONL file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Which samples to export; train and validation need a split manifest
    #[arg(long, value_enum, default_value_t = Part::Train)]
    part: Part,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Situation text
    #[arg(long)]
    situation: String,
    /// Chain polarity: pos or neg
    #[arg(long, value_parser = parse_polarity)]
    polarity: Polarity,
    /// Backend override (default: backend.kind)
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Mock seed override (default: backend.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the chains and their provenance into this directory
    #[arg(long, value_name = "DIR")]
    save: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Task: clue, thought, action or emotion
    #[arg(long, value_parser = parse_task)]
    task: TaskKind,
    /// Predictions JSONL of {"input_id","texts"}
    #[arg(long, value_name = "FILE")]
    preds: PathBuf,
    /// References JSONL of {"input_id","texts"}
    #[arg(long, value_name = "FILE")]
    refs: PathBuf,
    /// Output format override (default: eval.format)
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

#[derive(Debug, Subcommand)]
pub enum EscCommand {
    /// Append generated keywords to each dialogue history
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Dialogues JSONL of {"situation","turns":[{"speaker","text"}]}
    #[arg(long, value_name = "FILE")]
    dialogues: PathBuf,
    /// Keyword source: thoughts or actions (default: esc.source)
    #[arg(long, value_parser = parse_source)]
    source: Option<KeywordSource>,
    /// Output JSONL file (default: stdout)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

fn parse_polarity(s: &str) -> Result<Polarity, String> {
    s.parse().map_err(|e: tomforge_core::chain_model::ChainError| e.to_string())
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: tomforge_core::task_builder::TaskError| e.to_string())
}

fn parse_source(s: &str) -> Result<KeywordSource, String> {
    s.parse()
}

fn init_logging(verbose: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(if verbose { "info" } else { "warn" }));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    init_logging(cli.verbose);
    let config = Config::load(cli.config.as_deref(), std::env::vars())?;
    commands::dispatch(cli.command, &config)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
