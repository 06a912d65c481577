//! `qmon`: synthetic data, classifier pools, ensemble selection, evaluation,
//! cross-validation, surrogate DoE and serving.
//!
//! Exit status is 0 on success, 2 on invalid input (usage, files, config,
//! unknown model ids) and 1 on internal failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "qmon", version, about = "Classifier ensembles for proactive quality monitoring")]
pub struct Cli {
    /// Master seed; every stochastic step derives its own seed from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// JSON pipeline configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts, also the default location of inputs.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic factor/defect dataset: data.csv, schema.json, ground_truth.json.
    Synth(SynthArgs),
    /// Split the data and train a bagged pool: pool.json.
    Pool(PoolArgs),
    /// Build an ensemble from a saved pool and store it: store/, select_report.json.
    Select(SelectArgs),
    /// Holdout evaluation of a stored ensemble against the best pool members.
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation of the configured trainers.
    Crossval(CrossvalArgs),
    /// Full-factorial DoE on a stored ensemble: doe.json, envelope/*.csv.
    Doe(DoeArgs),
    /// Serve the model store over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Factor CSV; defaults to <out>/data.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Schema JSON; defaults to <out>/schema.json.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub defect_rate: Option<f64>,
    /// Schema JSON to draw from; the built-in lacquering schema otherwise.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Members per family.
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated families (mlp,tree,knn,svm).
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pool artifact; defaults to <out>/pool.json.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// accuracy, sad or pruning.
    #[arg(long)]
    pub strategy: Option<String>,
    /// vote, mean or trained.
    #[arg(long)]
    pub fusion: Option<String>,
    /// Defect-type name of the stored model.
    #[arg(long)]
    pub defect: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model store; defaults to <out>/store.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Stored model id; defaults to the id of the configured defect name.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pool artifact; defaults to <out>/pool.json.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DoeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Levels per continuous controllable factor.
    #[arg(long)]
    pub levels: Option<usize>,
    /// incidence or score.
    #[arg(long)]
    pub response: Option<String>,
    /// JSON object of uncontrollable factor values overriding the model's
    /// reference operating point.
    #[arg(long)]
    pub operating_point: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model store; defaults to <out>/store.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

/// Input the user can fix: exit status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = PipelineConfig::load(cli.config.as_deref()).and_then(|config| commands::run(&cli, &config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
