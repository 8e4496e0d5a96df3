use serde::Serialize;

use segqc_core::synth::{case_id, generate_cohort, q_ramp, SynthParams, VolumeFormat, MANIFEST_FILE};
use segqc_core::volume::GridShape;

use super::{volume_format, Global};
use crate::config::SynthFile;
use crate::error::CliResult;
use crate::{Outputs, SynthArgs};

#[derive(Debug, Serialize)]
struct SynthRun {
    cases: usize,
    levels: usize,
    params: SynthParams,
    volume_format: VolumeFormat,
    q: Vec<f64>,
}

pub(crate) fn run(g: &Global, a: &SynthArgs, f: &SynthFile) -> CliResult<()> {
    let defaults = SynthParams::default();
    let grid = match a.grid {
        Some(n) => [n; 3],
        None => f.grid.unwrap_or(defaults.shape.dims()),
    };
    let params = SynthParams {
        shape: GridShape::new(grid[0], grid[1], grid[2])?,
        lesion_count: f.lesion_count.unwrap_or(defaults.lesion_count),
        lesion_radius: f.lesion_radius.unwrap_or(defaults.lesion_radius),
        q: 0.0,
        n_samples: a.samples.or(f.samples).unwrap_or(defaults.n_samples),
        recon_noise: f.recon_noise.unwrap_or(defaults.recon_noise),
        seed: g.seed,
    };
    params.validate()?;
    let cases = a.cases.or(f.cases).unwrap_or(40);
    let levels = a.levels.or(f.levels).unwrap_or(5);
    let cfg = SynthRun {
        cases,
        levels,
        volume_format: volume_format(a.volume_format.as_ref(), f.volume_format.as_ref())?,
        q: q_ramp(cases, levels),
        params,
    };
    let mut names: Vec<String> = (0..cases).map(case_id).collect();
    names.push(MANIFEST_FILE.into());
    names.push(crate::manifest_name("synth"));
    let mut out = Outputs::claim(&g.out, g.force, &names)?;

    generate_cohort(&cfg.params, &cfg.q, &g.out, cfg.volume_format)?;
    for n in &names[..names.len() - 1] {
        out.record(n.clone());
    }
    out.finish("synth", g.seed, &cfg)
}
