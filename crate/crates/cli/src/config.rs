//! Optional TOML run configuration.
//!
//! Top-level keys `seed`, `out` and `force`, plus one table per subcommand.
//! Every key mirrors a command-line flag; flags win over file values and
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: Option<bool>,
    #[serde(default)]
    pub maps: MapsFile,
    #[serde(default)]
    pub errmap: ErrmapFile,
    #[serde(default)]
    pub synth: SynthFile,
    #[serde(default)]
    pub score: ScoreFile,
    #[serde(default)]
    pub train: TrainFile,
    #[serde(default)]
    pub predict: PredictFile,
    #[serde(default)]
    pub gate: GateFile,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsFile {
    pub samples: Option<Vec<PathBuf>>,
    pub gt: Option<PathBuf>,
    pub binarize_threshold: Option<f64>,
    pub volume_format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrmapFile {
    pub original: Option<PathBuf>,
    pub recon: Option<PathBuf>,
    pub abs: Option<bool>,
    pub volume_format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub cases: Option<usize>,
    pub levels: Option<usize>,
    pub grid: Option<[usize; 3]>,
    pub samples: Option<usize>,
    pub lesion_count: Option<(usize, usize)>,
    pub lesion_radius: Option<(f64, f64)>,
    pub recon_noise: Option<f64>,
    pub volume_format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFile {
    pub manifest: Option<PathBuf>,
    pub binarize_threshold: Option<f64>,
    pub abs: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub cases: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub folds: Option<u32>,
    pub pair_kind: Option<String>,
    pub delta: Option<f64>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden_width: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictFile {
    pub model: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub cases: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateFile {
    pub cases: Option<PathBuf>,
    pub score: Option<String>,
    pub threshold: Option<f64>,
    pub flag: Option<String>,
    pub positive: Option<String>,
    pub dice_fail: Option<f64>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// First present value, else an error naming the flag.
pub(crate) fn required<T>(flag: &str, values: impl IntoIterator<Item = Option<T>>) -> CliResult<T> {
    values
        .into_iter()
        .flatten()
        .next()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required (flag or config file)")))
}

pub(crate) fn parse_enum<T>(flag: &str, value: &str) -> CliResult<T>
where
    T: std::str::FromStr<Err = segqc_core::Error>,
{
    value
        .parse()
        .map_err(|e: segqc_core::Error| CliError::Config(format!("--{flag}: {e}")))
}
