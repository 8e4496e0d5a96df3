//! Map-level QC math: averaging Monte-Carlo samples, binary-entropy
//! uncertainty, reconstruction error maps and voxel-wise sums (VS).

use serde::{Deserialize, Serialize};

use crate::volume::{ensure_shape, BinaryMask, GridShape, ProbabilityMap, ScalarVolume};
use crate::{Error, Result};

/// Lower clamp applied to probabilities before taking log2.
pub const ENTROPY_EPS: f64 = 1e-12;

/// N >= 2 probability maps of one shape, e.g. repeated dropout-enabled passes.
#[derive(Debug, Clone)]
pub struct SampleStack {
    samples: Vec<ProbabilityMap>,
}

impl SampleStack {
    pub fn new(samples: Vec<ProbabilityMap>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a sample stack needs at least 2 maps, got {}",
                samples.len()
            )));
        }
        let shape = samples[0].shape();
        for s in &samples[1..] {
            ensure_shape(shape, s.shape())?;
        }
        Ok(SampleStack { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> GridShape {
        self.samples[0].shape()
    }

    pub fn samples(&self) -> &[ProbabilityMap] {
        &self.samples
    }
}

/// Per-voxel binary entropy in bits, in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap(ScalarVolume);

impl UncertaintyMap {
    pub fn as_volume(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_volume(self) -> ScalarVolume {
        self.0
    }
}

/// Signed difference original - reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap(ScalarVolume);

impl ErrorMap {
    pub fn as_volume(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_volume(self) -> ScalarVolume {
        self.0
    }
}

/// Voxel-wise arithmetic mean of the stack.
pub fn mc_average(stack: &SampleStack) -> ProbabilityMap {
    let shape = stack.shape();
    let n = stack.len() as f64;
    let mut acc = vec![0.0f64; shape.voxel_count()];
    for s in stack.samples() {
        for (a, &v) in acc.iter_mut().zip(s.data()) {
            *a += v;
        }
    }
    // the sum of N values <= 1 never exceeds N under round-to-nearest
    let data = acc.into_iter().map(|a| (a / n).min(1.0)).collect();
    ProbabilityMap::new(shape, data).expect("mean of probabilities is a probability")
}

/// Binary entropy of `p` in bits, with 0 log 0 = 0.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    // fold onto [0, 0.5] so H(p) and H(1 - p) share one evaluation order
    let q = if p <= 0.5 { p } else { 1.0 - p };
    let q = q.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
    let r = 1.0 - q;
    let h = -q * q.log2() - r * r.log2();
    h.clamp(0.0, 1.0)
}

pub fn entropy_map(p: &ProbabilityMap) -> UncertaintyMap {
    let vol = p
        .as_volume()
        .map_values(binary_entropy)
        .expect("entropy of a probability is finite");
    UncertaintyMap(vol)
}

/// Zeroes `image` wherever `mask` is set.
pub fn mask_out_lesions(image: &ScalarVolume, mask: &BinaryMask) -> Result<ScalarVolume> {
    image.ensure_same_shape(mask.shape())?;
    let data = image
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m { 0.0 } else { v })
        .collect();
    ScalarVolume::with_meta(image.shape(), data, image.meta().clone())
}

pub fn error_map(original: &ScalarVolume, reconstructed: &ScalarVolume) -> Result<ErrorMap> {
    original.ensure_same_shape(reconstructed.shape())?;
    let data = original
        .data()
        .iter()
        .zip(reconstructed.data())
        .map(|(&a, &b)| a - b)
        .collect();
    Ok(ErrorMap(ScalarVolume::new(original.shape(), data)?))
}

/// Neumaier-compensated sum of a sequence, in order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sum of all voxel values (VS).
pub fn voxelwise_sum(map: &ScalarVolume) -> f64 {
    compensated_sum(map.data().iter().copied())
}

/// How error-map voxels enter the voxel-wise sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VsMode {
    #[default]
    Signed,
    Absolute,
}

pub fn error_vs(map: &ErrorMap, mode: VsMode) -> f64 {
    match mode {
        VsMode::Signed => voxelwise_sum(map.as_volume()),
        VsMode::Absolute => compensated_sum(map.as_volume().data().iter().map(|v| v.abs())),
    }
}
