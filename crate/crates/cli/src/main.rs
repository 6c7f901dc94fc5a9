//! `profile-sentinel`: generate corpora, embed, train, tune, run scenario
//! grids and render reports.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sentinel_core::featurize::Layout;
use sentinel_core::learn::ClassifierKind;

use crate::manifest::RunManifest;

pub const LOG_ENV: &str = "PROFILE_SENTINEL_LOG";
pub const DEFAULT_OUT: &str = "sentinel-out";

#[derive(Debug, Parser)]
#[command(name = "profile-sentinel", version, about = "Fake professional-profile detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic corpus and its word-vector table.
    Generate(GenerateArgs),
    /// Check a corpus for schema problems and duplicate ids.
    Validate(ValidateArgs),
    /// Compute section embeddings with the built-in encoder.
    Embed(EmbedArgs),
    /// Train one classifier on a corpus with a stratified holdout.
    Train(TrainArgs),
    /// Search hyperparameters on a corpus.
    Tune(TrainArgs),
    /// Run the scenario grid described by a config file.
    Scenario(ScenarioArgs),
    /// Render CSV and SVG reports from a run directory.
    Report(ReportArgs),
    /// generate, embed, scenario and report in one go.
    All(AllArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator config (JSON); built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplier on the canonical class counts.
    #[arg(long)]
    pub scale: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub word_vectors: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Precomputed section embeddings (JSON Lines).
    #[arg(long, conflicts_with = "word_vectors", required_unless_present = "word_vectors")]
    pub embeddings: Option<PathBuf>,
    /// Word-vector table for the built-in encoder.
    #[arg(long)]
    pub word_vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Fused,
    Text,
    Numeric,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Fused => Layout::Fused,
            LayoutArg::Text => Layout::Text,
            LayoutArg::Numeric => Layout::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassifierArg {
    Gbdt,
    GbdtReg,
    Logreg,
    Knn,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Gbdt => ClassifierKind::Gbdt,
            ClassifierArg::GbdtReg => ClassifierKind::GbdtReg,
            ClassifierArg::Logreg => ClassifierKind::Logreg,
            ClassifierArg::Knn => ClassifierKind::Knn,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Training config (JSON): params, tune, holdout, pca_components.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fused")]
    pub layout: LayoutArg,
    #[arg(long, value_enum, default_value = "gbdt")]
    pub classifier: ClassifierArg,
    #[arg(long, default_value_t = 20_240_101)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Grid config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Corpus to run on; a synthetic corpus is generated when absent.
    #[arg(long, requires = "encoding")]
    pub corpus: Option<PathBuf>,
    #[arg(long, group = "encoding")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, group = "encoding")]
    pub word_vectors: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config scale.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Worker threads for grid cells.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding a `bundle.json` from `train` or `scenario`.
    #[arg(long)]
    pub from: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AllArgs {
    /// Grid config (JSON); every scenario on the fused GBDT otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 20_240_101)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0 / 6.0)]
    pub scale: f64,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Validate(_) => "validate",
            Command::Embed(_) => "embed",
            Command::Train(_) => "train",
            Command::Tune(_) => "tune",
            Command::Scenario(_) => "scenario",
            Command::Report(_) => "report",
            Command::All(_) => "all",
        }
    }

    fn out_dir(&self) -> &Path {
        match self {
            Command::Generate(a) => &a.out.out,
            Command::Validate(a) => &a.out.out,
            Command::Embed(a) => &a.out.out,
            Command::Train(a) | Command::Tune(a) => &a.out.out,
            Command::Scenario(a) => &a.out.out,
            Command::Report(a) => &a.out.out,
            Command::All(a) => &a.out.out,
        }
    }

    /// (config paths, input files, seed)
    fn provenance(&self) -> (Vec<PathBuf>, Vec<PathBuf>, Option<u64>) {
        let opt = |p: &Option<PathBuf>| p.iter().cloned().collect::<Vec<_>>();
        match self {
            Command::Generate(a) => (opt(&a.config), opt(&a.config), a.seed),
            Command::Validate(a) => (vec![], vec![a.corpus.clone()], None),
            Command::Embed(a) => (vec![], vec![a.corpus.clone(), a.word_vectors.clone()], None),
            Command::Train(a) | Command::Tune(a) => {
                let mut inputs = vec![a.data.corpus.clone()];
                inputs.extend(opt(&a.data.embeddings));
                inputs.extend(opt(&a.data.word_vectors));
                inputs.extend(opt(&a.config));
                (opt(&a.config), inputs, Some(a.seed))
            }
            Command::Scenario(a) => {
                let mut inputs = vec![a.config.clone()];
                inputs.extend(opt(&a.corpus));
                inputs.extend(opt(&a.embeddings));
                inputs.extend(opt(&a.word_vectors));
                (vec![a.config.clone()], inputs, a.seed)
            }
            Command::Report(a) => (vec![], vec![a.from.join(commands::BUNDLE_FILE)], None),
            Command::All(a) => (opt(&a.config), opt(&a.config), Some(a.seed)),
        }
    }
}

/// Error chain joined with ": ", skipping causes already spelled out by
/// their parent.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for e in err.chain() {
        let text = e.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn error_json(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<sentinel_core::Error>())
        .map_or_else(
            || {
                if err.downcast_ref::<commands::ValidationFailed>().is_some() {
                    "validation"
                } else {
                    "cli"
                }
            },
            sentinel_core::Error::kind,
        );
    serde_json::json!({ "error": { "kind": kind, "message": message(err) } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let command = &cli.command;
    let out_dir = command.out_dir().to_path_buf();
    let (configs, inputs, seed) = command.provenance();
    let mut manifest = RunManifest::begin(command.name(), std::env::args().collect(), configs, &inputs, seed);

    let result = match command {
        Command::Generate(a) => commands::generate(a),
        Command::Validate(a) => commands::validate(a),
        Command::Embed(a) => commands::embed(a),
        Command::Train(a) => commands::train(a),
        Command::Tune(a) => commands::tune(a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Report(a) => commands::report(a),
        Command::All(a) => commands::all(a),
    };
    let code = match &result {
        Ok(outputs) => {
            manifest.outputs = outputs.clone();
            manifest.status = "ok";
            ExitCode::SUCCESS
        }
        Err(e) => {
            manifest.status = "failed";
            manifest.error = Some(message(e));
            eprintln!("{}", error_json(e));
            ExitCode::from(1)
        }
    };
    if let Err(e) = manifest.write(&out_dir) {
        eprintln!("{}", error_json(&e));
        return ExitCode::from(1);
    }
    code
}
