//! Deterministic synthetic cohorts.
//!
//! Each case has a smooth background with bright spherical Gaussian
//! lesions, the ground-truth lesion mask, a Monte-Carlo style sample stack
//! and a lesion-inpainted reconstruction. The degradation strength `q`
//! shrinks predicted lesions and drops some of them outright, so poor
//! cases lose lesion boundary, and with it most of their sample
//! disagreement: uncertainty-VS falls together with Dice.
//!
//! Randomness comes from ChaCha8 seeded with the cohort seed, using the
//! case index as the stream id, so every case is reproducible on its own.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::maps::{mask_out_lesions, SampleStack};
use crate::volume::{save_mask, save_volume, BinaryMask, DataType, Encoding, GridShape, ProbabilityMap, ScalarVolume};
use crate::{Error, Result};

/// Width (voxels) of the logistic edge of each sample's lesion.
const EDGE_WIDTH: f64 = 0.25;
/// Per-sample lesion radius jitter (voxels); drives boundary uncertainty.
const RADIUS_JITTER: f64 = 1.0;
/// Fraction of the lesion radius removed at q = 1.
const SHRINK_AT_FULL_Q: f64 = 0.3;
/// Probability of missing a lesion entirely at q = 1.
const MISS_AT_FULL_Q: f64 = 0.5;
/// Largest multiplicative voxel noise on foreground probabilities at q = 1.
const VOXEL_NOISE_AT_FULL_Q: f64 = 0.1;
const LESION_AMPLITUDE: f64 = 0.5;
const PLACEMENT_RETRIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub shape: GridShape,
    /// Inclusive range of lesions per case.
    pub lesion_count: (usize, usize),
    /// Range of lesion radii in voxels.
    pub lesion_radius: (f64, f64),
    /// Degradation strength in [0, 1].
    pub q: f64,
    pub n_samples: usize,
    pub recon_noise: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            shape: GridShape { nx: 32, ny: 32, nz: 32 },
            lesion_count: (3, 4),
            lesion_radius: (3.0, 4.5),
            q: 0.0,
            n_samples: 20,
            recon_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let (cmin, cmax) = self.lesion_count;
        let (rmin, rmax) = self.lesion_radius;
        if cmin > cmax {
            return bad(format!("lesion count range {cmin}..={cmax} is empty"));
        }
        if !(rmin >= 1.0 && rmax >= rmin) {
            return bad(format!("lesion radii must satisfy 1 <= min <= max, got {rmin}..{rmax}"));
        }
        let smallest = self.shape.dims().into_iter().min().unwrap() as f64;
        if 2.0 * rmax + 3.0 > smallest {
            return bad(format!("radius {rmax} does not fit in {}", self.shape));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad(format!("q must lie in [0, 1], got {}", self.q));
        }
        if self.n_samples < 2 {
            return bad(format!("need at least 2 samples, got {}", self.n_samples));
        }
        if !(self.recon_noise >= 0.0 && self.recon_noise.is_finite()) {
            return bad(format!("reconstruction noise must be >= 0, got {}", self.recon_noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCase {
    pub image: ScalarVolume,
    pub gt: BinaryMask,
    pub stack: SampleStack,
    pub reconstruction: ScalarVolume,
}

#[derive(Debug, Clone, Copy)]
struct Lesion {
    center: [f64; 3],
    radius: f64,
}

fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn place_lesions(params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Vec<Lesion>> {
    let (cmin, cmax) = params.lesion_count;
    let (rmin, rmax) = params.lesion_radius;
    let count = rng.gen_range(cmin..=cmax);
    let dims = params.shape.dims();
    let mut lesions: Vec<Lesion> = Vec::with_capacity(count);
    for _ in 0..count {
        let radius = if rmax > rmin { rng.gen_range(rmin..=rmax) } else { rmin };
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let mut center = [0.0; 3];
            for (axis, c) in center.iter_mut().enumerate() {
                let lo = radius + 1.0;
                let hi = dims[axis] as f64 - 2.0 - radius;
                *c = rng.gen_range(lo..=hi);
            }
            let clear = lesions.iter().all(|l| {
                let d2: f64 = (0..3).map(|a| (l.center[a] - center[a]).powi(2)).sum();
                d2.sqrt() > l.radius + radius + 2.0
            });
            if clear {
                lesions.push(Lesion { center, radius });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place {count} lesions of radius <= {rmax} in {}",
                params.shape
            )));
        }
    }
    Ok(lesions)
}

fn distance(l: &Lesion, x: usize, y: usize, z: usize) -> f64 {
    let d = [x as f64 - l.center[0], y as f64 - l.center[1], z as f64 - l.center[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Fills masked voxels with the mean of unmasked voxels in a growing cube.
fn inpaint(image: &ScalarVolume, mask: &BinaryMask) -> Vec<f64> {
    let s = image.shape();
    let mut out = image.data().to_vec();
    for i in 0..out.len() {
        if !mask.data()[i] {
            continue;
        }
        let (x, y, z) = s.coords(i);
        let mut radius = 2usize;
        loop {
            let (mut sum, mut n) = (0.0, 0usize);
            for zz in z.saturating_sub(radius)..=(z + radius).min(s.nz - 1) {
                for yy in y.saturating_sub(radius)..=(y + radius).min(s.ny - 1) {
                    for xx in x.saturating_sub(radius)..=(x + radius).min(s.nx - 1) {
                        let j = s.index(xx, yy, zz);
                        if !mask.data()[j] {
                            sum += image.data()[j];
                            n += 1;
                        }
                    }
                }
            }
            if n > 0 {
                out[i] = sum / n as f64;
                break;
            }
            radius *= 2;
            if radius > s.nx.max(s.ny).max(s.nz) {
                out[i] = 0.0;
                break;
            }
        }
    }
    out
}

/// Builds case `index` of the cohort described by `params`.
pub fn generate_case(params: &SynthParams, index: u64) -> Result<SynthCase> {
    params.validate()?;
    let mut rng = case_rng(params.seed, index);
    let shape = params.shape;
    let q = params.q;
    let lesions = place_lesions(params, &mut rng)?;

    let tau = std::f64::consts::TAU;
    let phase: [f64; 3] = [rng.gen_range(0.0..tau), rng.gen_range(0.0..tau), rng.gen_range(0.0..tau)];
    let image = ScalarVolume::from_fn(shape, |x, y, z| {
        let bg = 0.25
            + 0.04 * (tau * x as f64 / shape.nx as f64 + phase[0]).sin()
            + 0.04 * (tau * y as f64 / shape.ny as f64 + phase[1]).sin()
            + 0.04 * (tau * z as f64 / shape.nz as f64 + phase[2]).sin();
        let blobs: f64 = lesions
            .iter()
            .map(|l| {
                let sigma = l.radius / 2.0;
                let d = distance(l, x, y, z);
                LESION_AMPLITUDE * (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        bg + blobs
    })?;

    // blob thresholded at its own radius
    let gt_data = (0..shape.voxel_count())
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            lesions.iter().any(|l| distance(l, x, y, z) <= l.radius)
        })
        .collect();
    let gt = BinaryMask::new(shape, gt_data)?;

    // degradation shared by every sample of the case
    let predicted: Vec<Lesion> = lesions
        .iter()
        .filter_map(|l| {
            let missed = rng.gen_bool(MISS_AT_FULL_Q * q);
            (!missed).then(|| Lesion {
                center: l.center,
                radius: l.radius * (1.0 - SHRINK_AT_FULL_Q * q),
            })
        })
        .collect();

    // stratified radius offsets, shuffled per lesion: the sample median
    // stays on the predicted radius while each sample moves the border
    let n = params.n_samples;
    let offsets: Vec<Vec<f64>> = predicted
        .iter()
        .map(|_| {
            let mut o: Vec<f64> = (0..n)
                .map(|k| RADIUS_JITTER * (2.0 * (k as f64 + 0.5) / n as f64 - 1.0))
                .collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let radii: Vec<f64> = predicted
            .iter()
            .zip(&offsets)
            .map(|(l, o)| (l.radius + o[k]).max(0.5))
            .collect();
        let mut data = vec![0.0f64; shape.voxel_count()];
        for (l, &r) in predicted.iter().zip(&radii) {
            let reach = r + 6.0 * EDGE_WIDTH;
            let lo = |a: usize| (l.center[a] - reach).floor().max(0.0) as usize;
            let hi = |a: usize, n: usize| ((l.center[a] + reach).ceil() as usize).min(n - 1);
            for z in lo(2)..=hi(2, shape.nz) {
                for y in lo(1)..=hi(1, shape.ny) {
                    for x in lo(0)..=hi(0, shape.nx) {
                        let p = 1.0 / (1.0 + ((distance(l, x, y, z) - r) / EDGE_WIDTH).exp());
                        let i = shape.index(x, y, z);
                        data[i] = data[i].max(p);
                    }
                }
            }
        }
        if q > 0.0 {
            for p in data.iter_mut().filter(|p| **p > 0.0) {
                *p *= 1.0 - VOXEL_NOISE_AT_FULL_Q * q * rng.gen::<f64>();
            }
        }
        samples.push(ProbabilityMap::new(shape, data)?);
    }
    let stack = SampleStack::new(samples)?;

    let masked = mask_out_lesions(&image, &gt)?;
    let mut recon = inpaint(&masked, &gt);
    let sd = params.recon_noise * q;
    if sd > 0.0 {
        let normal = Normal::new(0.0, sd).expect("positive standard deviation");
        for v in recon.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let reconstruction = ScalarVolume::new(shape, recon)?;

    Ok(SynthCase {
        image,
        gt,
        stack,
        reconstruction,
    })
}

/// Degradation per case: `levels` equal blocks from 0 to 1, or a linear
/// ramp over all cases when `levels` is 0.
pub fn q_ramp(n_cases: usize, levels: usize) -> Vec<f64> {
    if n_cases <= 1 {
        return vec![0.0; n_cases];
    }
    match levels {
        0 => (0..n_cases).map(|i| i as f64 / (n_cases - 1) as f64).collect(),
        1 => vec![0.0; n_cases],
        _ => (0..n_cases)
            .map(|i| (i * levels / n_cases) as f64 / (levels - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    Nifti,
    Rawvol,
}

impl VolumeFormat {
    pub fn extension(self) -> &'static str {
        match self {
            VolumeFormat::Nifti => "nii",
            VolumeFormat::Rawvol => "rvol.json",
        }
    }
}

impl std::str::FromStr for VolumeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nifti" | "nii" => Ok(VolumeFormat::Nifti),
            "rawvol" | "rvol" => Ok(VolumeFormat::Rawvol),
            other => Err(Error::InvalidArgument(format!("unknown volume format {other:?}"))),
        }
    }
}

/// One row of `manifest.csv`. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub q: f64,
    pub image_path: String,
    pub gt_path: String,
    /// Semicolon-joined.
    pub sample_paths: String,
    pub recon_path: String,
}

impl ManifestRow {
    pub fn samples(&self) -> Vec<&str> {
        self.sample_paths.split(';').filter(|s| !s.is_empty()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_COLUMNS: [&str; 6] = ["id", "q", "image_path", "gt_path", "sample_paths", "recon_path"];

impl CohortManifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
        if header != MANIFEST_COLUMNS {
            return Err(Error::Parse(format!(
                "{}: manifest header must be {}",
                path.display(),
                MANIFEST_COLUMNS.join(",")
            )));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
        Ok(CohortManifest {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            rows,
        })
    }
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

fn write_case(case: &SynthCase, dir: &Path, id: &str, q: f64, format: VolumeFormat) -> Result<ManifestRow> {
    let case_dir = dir.join(id);
    std::fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
    let ext = format.extension();
    let rel = |name: &str| format!("{id}/{name}.{ext}");
    let f32 = Encoding::new(DataType::F32);

    let image = rel("image");
    save_volume(&case.image, dir.join(&image), f32)?;
    let gt = rel("gt");
    save_mask(&case.gt, dir.join(&gt))?;
    let recon = rel("recon");
    save_volume(&case.reconstruction, dir.join(&recon), f32)?;
    let mut samples = Vec::with_capacity(case.stack.len());
    for (k, s) in case.stack.samples().iter().enumerate() {
        let p = rel(&format!("sample_{k:02}"));
        save_volume(s.as_volume(), dir.join(&p), f32)?;
        samples.push(p);
    }
    Ok(ManifestRow {
        id: id.to_string(),
        q,
        image_path: image,
        gt_path: gt,
        sample_paths: samples.join(";"),
        recon_path: recon,
    })
}

/// Generates `q_schedule.len()` cases under `dir` and writes `manifest.csv`.
///
/// Case `i` uses `params` with `q = q_schedule[i]`. Cases are generated in
/// parallel; output is identical to a sequential run.
pub fn generate_cohort(
    params: &SynthParams,
    q_schedule: &[f64],
    dir: impl AsRef<Path>,
    format: VolumeFormat,
) -> Result<CohortManifest> {
    let dir = dir.as_ref();
    if q_schedule.is_empty() {
        return Err(Error::InvalidArgument("a cohort needs at least one case".into()));
    }
    params.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = q_schedule
        .par_iter()
        .enumerate()
        .map(|(i, &q)| {
            let p = SynthParams { q, ..params.clone() };
            let id = case_id(i);
            let case = generate_case(&p, i as u64)
                .map_err(|e| Error::Generation(format!("{id}: {e}")))?;
            write_case(&case, dir, &id, q, format)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = CohortManifest {
        root: dir.to_path_buf(),
        rows,
    };
    manifest.write(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
