use std::path::PathBuf;

use segqc_core::synth::VolumeFormat;

use crate::config::parse_enum;
use crate::error::{CliError, CliResult};

pub(crate) mod gate;
pub(crate) mod maps;
pub(crate) mod score;
pub(crate) mod synth;
pub(crate) mod train;

pub(crate) struct Global {
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
}

pub(crate) fn volume_format(flag: Option<&String>, file: Option<&String>) -> CliResult<VolumeFormat> {
    match flag.or(file) {
        Some(v) => parse_enum("volume-format", v),
        None => Ok(VolumeFormat::Nifti),
    }
}

/// Prefixes a case id while keeping the failure class.
pub(crate) fn in_case(id: &str, e: impl Into<CliError>) -> CliError {
    match e.into() {
        CliError::Config(m) => CliError::Config(format!("case {id}: {m}")),
        CliError::Input(m) => CliError::Input(format!("case {id}: {m}")),
        CliError::Degenerate(m) => CliError::Degenerate(format!("case {id}: {m}")),
        CliError::Internal(m) => CliError::Internal(format!("case {id}: {m}")),
    }
}
