//! `segqc` command-line front end.
//!
//! Each subcommand composes `segqc-core` calls; no numerical work happens
//! here beyond wiring. Every run writes `<command>.manifest.json` next to its
//! outputs, recording the resolved configuration and seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use segqc_core::gate::{GateReport, ReportFormat};

mod commands;
pub mod config;
pub mod error;

pub use config::FileConfig;
pub use error::{CliError, CliResult};

use error::io_err;

#[derive(Debug, Parser)]
#[command(name = "segqc", version, about = "Segmentation quality control")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average a sample stack, write the entropy map and its VS.
    Maps(MapsArgs),
    /// Error map between an original and a reconstruction, with its VS.
    Errmap(ErrmapArgs),
    /// Score every case of a cohort manifest into cases.csv and features.csv.
    Score(ScoreArgs),
    /// Train Dice regressors with k-fold cross-validation.
    Train(TrainArgs),
    /// Fill predicted Dice into a case table from a trained model.
    Predict(PredictArgs),
    /// Gate a case table on one score and evaluate the result.
    Gate(GateArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct MapsArgs {
    #[arg(long, num_args = 1..)]
    pub samples: Option<Vec<PathBuf>>,
    /// Ground-truth mask; adds Dice of the binarized average.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub binarize_threshold: Option<f64>,
    /// nifti or rawvol.
    #[arg(long)]
    pub volume_format: Option<String>,
}

#[derive(Debug, Args)]
pub struct ErrmapArgs {
    #[arg(long)]
    pub original: Option<PathBuf>,
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Sum absolute errors instead of signed ones.
    #[arg(long)]
    pub abs: bool,
    #[arg(long)]
    pub volume_format: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Cohort manifest.csv.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub binarize_threshold: Option<f64>,
    #[arg(long)]
    pub abs: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<u32>,
    /// image, uncertainty or error.
    #[arg(long)]
    pub pair_kind: Option<String>,
    /// Huber loss delta.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// uncertainty_vs, error_vs or predicted_dice.
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// below or above.
    #[arg(long)]
    pub flag: Option<String>,
    /// Positive class for precision/recall: fail or pass.
    #[arg(long)]
    pub positive: Option<String>,
    /// True Dice below this marks a failed case.
    #[arg(long)]
    pub dice_fail: Option<f64>,
    /// json, text or csv.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub cases: Option<usize>,
    /// Number of equal q blocks from 0 to 1; 0 gives a continuous ramp.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Cubic grid edge length.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub volume_format: Option<String>,
}

/// Output directory guard: refuses to replace files without `--force`.
pub(crate) struct Outputs {
    dir: PathBuf,
    force: bool,
    written: Vec<String>,
}

impl Outputs {
    /// Creates `dir` and checks that none of `names` exists yet.
    pub(crate) fn claim(dir: &Path, force: bool, names: &[String]) -> CliResult<Self> {
        if !force {
            if let Some(n) = names.iter().find(|n| dir.join(n).exists()) {
                return Err(CliError::Config(format!(
                    "{} already exists; pass --force to replace it",
                    dir.join(n).display()
                )));
            }
        }
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            force,
            written: Vec::new(),
        })
    }

    pub(crate) fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub(crate) fn record(&mut self, name: impl Into<String>) {
        self.written.push(name.into());
    }

    pub(crate) fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| io_err(&p, e))?;
        self.record(name);
        Ok(())
    }

    pub(crate) fn finish<C: Serialize>(mut self, command: &str, seed: u64, config: &C) -> CliResult<()> {
        let manifest = RunManifest {
            tool: "segqc",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            force: self.force,
            config,
            outputs: self.written.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        let name = manifest_name(command);
        self.write(&name, &text)
    }
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    force: bool,
    config: &'a C,
    outputs: Vec<String>,
}

/// Writes `report` in `format` to `path`.
pub fn write_report(report: &GateReport, format: ReportFormat, path: &Path) -> CliResult<()> {
    let text = report.render(format)?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let global = commands::Global {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: config::required("out", [cli.out.clone(), file.out.clone()])?,
        force: cli.force || file.force.unwrap_or(false),
    };
    match &cli.command {
        Command::Maps(a) => commands::maps::run(&global, a, &file.maps),
        Command::Errmap(a) => commands::maps::run_errmap(&global, a, &file.errmap),
        Command::Score(a) => commands::score::run(&global, a, &file.score),
        Command::Train(a) => commands::train::run(&global, a, &file.train),
        Command::Predict(a) => commands::train::run_predict(&global, a, &file.predict),
        Command::Gate(a) => commands::gate::run(&global, a, &file.gate),
        Command::Synth(a) => commands::synth::run(&global, a, &file.synth),
    }
}
