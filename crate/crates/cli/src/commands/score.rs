use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use segqc_core::gate::{write_cases_csv, CaseRecord};
use segqc_core::maps::{entropy_map, error_map, error_vs, mc_average, voxelwise_sum, SampleStack, VsMode};
use segqc_core::metrics::dice_coefficient;
use segqc_core::regressor::{extract_features, FeatureVector, PairKind, FEATURE_NAMES};
use segqc_core::synth::{CohortManifest, ManifestRow};
use segqc_core::volume::{binarize, load_mask, load_volume, ProbabilityMap};

use super::{in_case, Global};
use crate::config::{required, ScoreFile};
use crate::error::{io_err, CliError, CliResult};
use crate::{Outputs, ScoreArgs};

#[derive(Debug, Serialize)]
struct ScoreRun {
    manifest: PathBuf,
    binarize_threshold: f64,
    vs_mode: VsMode,
}

pub(crate) fn run(g: &Global, a: &ScoreArgs, f: &ScoreFile) -> CliResult<()> {
    let cfg = ScoreRun {
        manifest: required("manifest", [a.manifest.clone(), f.manifest.clone()])?,
        binarize_threshold: a.binarize_threshold.or(f.binarize_threshold).unwrap_or(0.5),
        vs_mode: if a.abs || f.abs.unwrap_or(false) {
            VsMode::Absolute
        } else {
            VsMode::Signed
        },
    };
    let names = ["cases.csv".to_string(), "features.csv".into(), crate::manifest_name("score")];
    let mut out = Outputs::claim(&g.out, g.force, &names)?;

    let manifest = CohortManifest::read(&cfg.manifest)?;
    let mut scored = manifest
        .rows
        .par_iter()
        .map(|row| score_case(&manifest, row, cfg.binarize_threshold, cfg.vs_mode).map_err(|e| in_case(&row.id, e)))
        .collect::<CliResult<Vec<_>>>()?;
    scored.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let cases: Vec<CaseRecord> = scored.iter().map(|(c, _)| c.clone()).collect();
    out.write("cases.csv", &write_cases_csv(&cases)?)?;
    let features: Vec<(String, FeatureVector)> = scored
        .into_iter()
        .flat_map(|(c, fs)| fs.into_iter().map(move |f| (c.id.clone(), f)))
        .collect();
    out.write("features.csv", &write_features(&features)?)?;
    out.finish("score", g.seed, &cfg)
}

fn score_case(
    m: &CohortManifest,
    row: &ManifestRow,
    threshold: f64,
    mode: VsMode,
) -> segqc_core::Result<(CaseRecord, Vec<FeatureVector>)> {
    let samples = row
        .samples()
        .into_iter()
        .map(|p| ProbabilityMap::from_volume(load_volume(m.resolve(p))?.1))
        .collect::<segqc_core::Result<Vec<_>>>()?;
    let stack = SampleStack::new(samples)?;
    let gt = load_mask(m.resolve(&row.gt_path))?;
    let (_, image) = load_volume(m.resolve(&row.image_path))?;
    let (_, recon) = load_volume(m.resolve(&row.recon_path))?;

    let avg = mc_average(&stack);
    let entropy = entropy_map(&avg);
    let em = error_map(&image, &recon)?;
    let mut rec = CaseRecord::new(row.id.clone());
    rec.true_dice = Some(dice_coefficient(&binarize(&avg, threshold), &gt)?);
    rec.uncertainty_vs = Some(voxelwise_sum(entropy.as_volume()));
    rec.error_vs = Some(error_vs(&em, mode));

    let features = vec![
        extract_features(&image, &avg, PairKind::Image)?,
        extract_features(entropy.as_volume(), &avg, PairKind::Uncertainty)?,
        extract_features(em.as_volume(), &avg, PairKind::Error)?,
    ];
    Ok((rec, features))
}

fn kind_name(k: PairKind) -> &'static str {
    match k {
        PairKind::Image => "image",
        PairKind::Uncertainty => "uncertainty",
        PairKind::Error => "error",
    }
}

/// Long table: one row per (case, pair kind).
pub(crate) fn write_features(rows: &[(String, FeatureVector)]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = ["id", "kind"].into_iter().chain(FEATURE_NAMES).collect();
    w.write_record(&header).map_err(internal)?;
    for (id, f) in rows {
        let mut rec = vec![id.clone(), kind_name(f.kind).to_string()];
        rec.extend(f.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(internal)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
}

pub(crate) fn read_features(path: &Path) -> CliResult<Vec<(String, FeatureVector)>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let expected: Vec<&str> = ["id", "kind"].into_iter().chain(FEATURE_NAMES).collect();
    if header != expected {
        return Err(bad("unexpected feature table header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let kind: PairKind = rec[1].parse().map_err(|e: segqc_core::Error| bad(e.to_string()))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("case {}: {e}", &rec[0]))))
            .collect::<CliResult<Vec<_>>>()?;
        rows.push((rec[0].to_string(), FeatureVector::new(kind, values)?));
    }
    Ok(rows)
}

fn internal(e: csv::Error) -> CliError {
    CliError::Internal(e.to_string())
}
