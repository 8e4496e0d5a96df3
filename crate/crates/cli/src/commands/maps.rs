use std::path::PathBuf;

use serde::Serialize;

use segqc_core::maps::{entropy_map, error_map, error_vs, mc_average, voxelwise_sum, SampleStack, VsMode};
use segqc_core::metrics::dice_coefficient;
use segqc_core::synth::VolumeFormat;
use segqc_core::volume::{binarize, load_mask, load_volume, save_volume, DataType, Encoding, ProbabilityMap};

use super::{volume_format, Global};
use crate::config::{required, ErrmapFile, MapsFile};
use crate::error::CliResult;
use crate::{ErrmapArgs, MapsArgs, Outputs};

#[derive(Debug, Serialize)]
struct MapsRun {
    samples: Vec<PathBuf>,
    gt: Option<PathBuf>,
    binarize_threshold: f64,
    volume_format: VolumeFormat,
}

#[derive(Debug, Serialize)]
struct MapsSummary {
    n_samples: usize,
    uncertainty_vs: f64,
    dice: Option<f64>,
}

pub(crate) fn run(g: &Global, a: &MapsArgs, f: &MapsFile) -> CliResult<()> {
    let cfg = MapsRun {
        samples: required("samples", [a.samples.clone(), f.samples.clone()])?,
        gt: a.gt.clone().or_else(|| f.gt.clone()),
        binarize_threshold: a.binarize_threshold.or(f.binarize_threshold).unwrap_or(0.5),
        volume_format: volume_format(a.volume_format.as_ref(), f.volume_format.as_ref())?,
    };
    let ext = cfg.volume_format.extension();
    let names = [format!("average.{ext}"), format!("entropy.{ext}"), "maps.json".into()];
    let mut out = Outputs::claim(&g.out, g.force, &[&names[..], &[crate::manifest_name("maps")]].concat())?;

    let samples = cfg
        .samples
        .iter()
        .map(|p| ProbabilityMap::from_volume(load_volume(p)?.1))
        .collect::<segqc_core::Result<Vec<_>>>()?;
    let stack = SampleStack::new(samples)?;
    let avg = mc_average(&stack);
    let entropy = entropy_map(&avg);
    let dice = match &cfg.gt {
        Some(p) => Some(dice_coefficient(&binarize(&avg, cfg.binarize_threshold), &load_mask(p)?)?),
        None => None,
    };
    let summary = MapsSummary {
        n_samples: stack.len(),
        uncertainty_vs: voxelwise_sum(entropy.as_volume()),
        dice,
    };

    let f32 = Encoding::new(DataType::F32);
    save_volume(avg.as_volume(), out.path(&names[0]), f32)?;
    out.record(&names[0]);
    save_volume(entropy.as_volume(), out.path(&names[1]), f32)?;
    out.record(&names[1]);
    out.write(&names[2], &to_json(&summary))?;
    out.finish("maps", g.seed, &cfg)
}

#[derive(Debug, Serialize)]
struct ErrmapRun {
    original: PathBuf,
    recon: PathBuf,
    vs_mode: VsMode,
    volume_format: VolumeFormat,
}

#[derive(Debug, Serialize)]
struct ErrmapSummary {
    error_vs: f64,
    vs_mode: VsMode,
}

pub(crate) fn run_errmap(g: &Global, a: &ErrmapArgs, f: &ErrmapFile) -> CliResult<()> {
    let cfg = ErrmapRun {
        original: required("original", [a.original.clone(), f.original.clone()])?,
        recon: required("recon", [a.recon.clone(), f.recon.clone()])?,
        vs_mode: if a.abs || f.abs.unwrap_or(false) {
            VsMode::Absolute
        } else {
            VsMode::Signed
        },
        volume_format: volume_format(a.volume_format.as_ref(), f.volume_format.as_ref())?,
    };
    let map_name = format!("error.{}", cfg.volume_format.extension());
    let names = [map_name.clone(), "errmap.json".into(), crate::manifest_name("errmap")];
    let mut out = Outputs::claim(&g.out, g.force, &names)?;

    let (_, original) = load_volume(&cfg.original)?;
    let (_, recon) = load_volume(&cfg.recon)?;
    let em = error_map(&original, &recon)?;
    let summary = ErrmapSummary {
        error_vs: error_vs(&em, cfg.vs_mode),
        vs_mode: cfg.vs_mode,
    };
    // nifti keeps the signed map exact; rawvol only stores f32
    let dt = match cfg.volume_format {
        VolumeFormat::Nifti => DataType::F64,
        VolumeFormat::Rawvol => DataType::F32,
    };
    save_volume(em.as_volume(), out.path(&map_name), Encoding::new(dt))?;
    out.record(&map_name);
    out.write("errmap.json", &to_json(&summary))?;
    out.finish("errmap", g.seed, &cfg)
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}
