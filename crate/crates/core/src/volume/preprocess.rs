use serde::{Deserialize, Serialize};

use super::{BinaryMask, GridShape, ProbabilityMap, ScalarVolume};
use crate::{Error, Result};

/// Linearly maps the volume's [min, max] onto [lo, hi]. A constant volume maps to `lo`.
pub fn normalize_intensities(v: &ScalarVolume, lo: f64, hi: f64) -> Result<ScalarVolume> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "normalization range needs hi > lo, got [{lo}, {hi}]"
        )));
    }
    let (min, max) = (v.min(), v.max());
    if max == min {
        return v.map_values(|_| lo);
    }
    let span = max - min;
    v.map_values(|x| lo + (x - min) * (hi - lo) / span)
}

/// Inclusive voxel index range per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn shape(&self) -> GridShape {
        GridShape {
            nx: self.max[0] - self.min[0] + 1,
            ny: self.max[1] - self.min[1] + 1,
            nz: self.max[2] - self.min[2] + 1,
        }
    }

    /// (lo, hi) pairs per axis.
    pub fn ranges(&self) -> [(usize, usize); 3] {
        [
            (self.min[0], self.max[0]),
            (self.min[1], self.max[1]),
            (self.min[2], self.max[2]),
        ]
    }
}

/// Tight box around voxels strictly above `threshold`, and the cropped volume.
pub fn crop_to_foreground(v: &ScalarVolume, threshold: f64) -> Result<(ScalarVolume, BoundingBox)> {
    let shape = v.shape();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, &val) in v.data().iter().enumerate() {
        if val > threshold {
            let (x, y, z) = shape.coords(i);
            for (axis, c) in [x, y, z].into_iter().enumerate() {
                lo[axis] = lo[axis].min(c);
                hi[axis] = hi[axis].max(c);
            }
            any = true;
        }
    }
    if !any {
        return Err(Error::NoForeground { threshold });
    }
    let bbox = BoundingBox { min: lo, max: hi };
    let out_shape = bbox.shape();
    let mut data = Vec::with_capacity(out_shape.voxel_count());
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            let row = shape.index(lo[0], y, z);
            data.extend_from_slice(&v.data()[row..row + out_shape.nx]);
        }
    }
    let cropped = ScalarVolume::with_meta(out_shape, data, v.meta().clone())?;
    Ok((cropped, bbox))
}

/// Places `cropped` back into a `shape` grid at the box offset, `fill` elsewhere.
pub fn embed(cropped: &ScalarVolume, bbox: &BoundingBox, shape: GridShape, fill: f64) -> Result<ScalarVolume> {
    super::ensure_shape(bbox.shape(), cropped.shape())?;
    if (0..3).any(|a| bbox.max[a] >= shape.dims()[a]) {
        return Err(Error::InvalidArgument(format!(
            "box {bbox:?} does not fit in {shape}"
        )));
    }
    let mut data = vec![fill; shape.voxel_count()];
    let cs = cropped.shape();
    for z in 0..cs.nz {
        for y in 0..cs.ny {
            let src = cs.index(0, y, z);
            let dst = shape.index(bbox.min[0], bbox.min[1] + y, bbox.min[2] + z);
            data[dst..dst + cs.nx].copy_from_slice(&cropped.data()[src..src + cs.nx]);
        }
    }
    ScalarVolume::with_meta(shape, data, cropped.meta().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

/// Corner-aligned source coordinate for each target index along one axis.
fn axis_positions(n_src: usize, n_tgt: usize) -> Vec<f64> {
    if n_tgt == 1 {
        return vec![0.0];
    }
    let scale = (n_src - 1) as f64;
    let denom = (n_tgt - 1) as f64;
    (0..n_tgt).map(|i| i as f64 * scale / denom).collect()
}

/// (lower index, upper index, weight of upper) per target index.
fn axis_weights(n_src: usize, n_tgt: usize) -> Vec<(usize, usize, f64)> {
    axis_positions(n_src, n_tgt)
        .into_iter()
        .map(|p| {
            let i0 = (p.floor() as usize).min(n_src - 1);
            let i1 = (i0 + 1).min(n_src - 1);
            (i0, i1, p - i0 as f64)
        })
        .collect()
}

fn nearest_indices(n_src: usize, n_tgt: usize) -> Vec<usize> {
    axis_positions(n_src, n_tgt)
        .into_iter()
        .map(|p| (p.round() as usize).min(n_src - 1))
        .collect()
}

fn resample_nearest<T: Copy>(src: &[T], from: GridShape, to: GridShape) -> Vec<T> {
    let ix = nearest_indices(from.nx, to.nx);
    let iy = nearest_indices(from.ny, to.ny);
    let iz = nearest_indices(from.nz, to.nz);
    let mut out = Vec::with_capacity(to.voxel_count());
    for &z in &iz {
        for &y in &iy {
            for &x in &ix {
                out.push(src[from.index(x, y, z)]);
            }
        }
    }
    out
}

/// Resamples onto `target` with corner-aligned sample positions.
pub fn resample_to_shape(v: &ScalarVolume, target: GridShape, mode: Interpolation) -> Result<ScalarVolume> {
    let from = v.shape();
    if from == target {
        return Ok(v.clone());
    }
    let mut meta = v.meta().clone();
    if let Some(vs) = meta.voxel_size.as_mut() {
        for (axis, s) in vs.iter_mut().enumerate() {
            *s *= from.dims()[axis] as f64 / target.dims()[axis] as f64;
        }
    }
    let data = match mode {
        Interpolation::Nearest => resample_nearest(v.data(), from, target),
        Interpolation::Trilinear => {
            let (lo, hi) = (v.min(), v.max());
            let wx = axis_weights(from.nx, target.nx);
            let wy = axis_weights(from.ny, target.ny);
            let wz = axis_weights(from.nz, target.nz);
            let src = v.data();
            let at = |x, y, z| src[from.index(x, y, z)];
            let mut out = Vec::with_capacity(target.voxel_count());
            for &(z0, z1, tz) in &wz {
                for &(y0, y1, ty) in &wy {
                    for &(x0, x1, tx) in &wx {
                        let c00 = at(x0, y0, z0) * (1.0 - tx) + at(x1, y0, z0) * tx;
                        let c10 = at(x0, y1, z0) * (1.0 - tx) + at(x1, y1, z0) * tx;
                        let c01 = at(x0, y0, z1) * (1.0 - tx) + at(x1, y0, z1) * tx;
                        let c11 = at(x0, y1, z1) * (1.0 - tx) + at(x1, y1, z1) * tx;
                        let c0 = c00 * (1.0 - ty) + c10 * ty;
                        let c1 = c01 * (1.0 - ty) + c11 * ty;
                        // rounding can step one ulp outside the source range
                        out.push((c0 * (1.0 - tz) + c1 * tz).clamp(lo, hi));
                    }
                }
            }
            out
        }
    };
    ScalarVolume::with_meta(target, data, meta)
}

/// Nearest-neighbour resampling for label data.
pub fn resample_mask(mask: &BinaryMask, target: GridShape) -> BinaryMask {
    if mask.shape() == target {
        return mask.clone();
    }
    let data = resample_nearest(mask.data(), mask.shape(), target);
    BinaryMask::new(target, data).expect("resampled length equals target voxel count")
}

/// True where the probability is strictly above `t`.
pub fn binarize(p: &ProbabilityMap, t: f64) -> BinaryMask {
    let data = p.data().iter().map(|&v| v > t).collect();
    BinaryMask::new(p.shape(), data).expect("same shape")
}
