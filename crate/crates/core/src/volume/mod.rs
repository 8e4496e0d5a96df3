//! Volume data model, preprocessing and file I/O.
//!
//! All voxel buffers are flat and x-fastest: index = x + nx * (y + ny * z),
//! which is also the NIfTI on-disk order.

mod io;
mod nifti;
mod preprocess;
mod rawvol;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_mask, load_volume, save_mask, save_volume, Encoding};
pub use nifti::{read_nifti, write_nifti, NIFTI_HEADER_SIZE, NIFTI_VOX_OFFSET};
pub use preprocess::{
    binarize, crop_to_foreground, embed, normalize_intensities, resample_mask, resample_to_shape,
    BoundingBox, Interpolation,
};
pub use rawvol::{read_rawvol, write_rawvol, RawVolHeader};

/// Number of voxels along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridShape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid shape must be positive on every axis, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::InvalidArgument(format!("grid {nx}x{ny}x{nz} overflows")))?;
        Ok(GridShape { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let y = (index / self.nx) % self.ny;
        let z = index / (self.nx * self.ny);
        (x, y, z)
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// On-disk element type. The discriminants are the NIfTI-1 datatype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    U8 = 2,
    I16 = 4,
    F32 = 16,
    F64 = 64,
}

impl DataType {
    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(DataType::U8),
            4 => Ok(DataType::I16),
            16 => Ok(DataType::F32),
            64 => Ok(DataType::F64),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn code(self) -> i16 {
        self as i16
    }

    pub fn size_bytes(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::U8 => "u8",
            DataType::I16 => "i16",
            DataType::F32 => "f32",
            DataType::F64 => "f64",
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, DataType::U8 | DataType::I16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Endian {
    #[default]
    Little,
    Big,
}

impl Endian {
    pub fn native() -> Self {
        if cfg!(target_endian = "big") {
            Endian::Big
        } else {
            Endian::Little
        }
    }
}

/// Where a volume came from and how its voxels were encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    /// Voxel size in mm per axis, when the source recorded one.
    pub voxel_size: Option<[f64; 3]>,
    pub datatype: DataType,
    /// Never 0: an on-disk slope of 0 is read as 1.
    pub scl_slope: f64,
    pub scl_inter: f64,
    pub endian: Endian,
}

impl Default for VolumeMeta {
    fn default() -> Self {
        VolumeMeta {
            voxel_size: None,
            datatype: DataType::F32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            endian: Endian::Little,
        }
    }
}

impl VolumeMeta {
    pub fn has_identity_scaling(&self) -> bool {
        self.scl_slope == 1.0 && self.scl_inter == 0.0
    }
}

/// Dense 3D grid of finite real values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    shape: GridShape,
    data: Vec<f64>,
    meta: VolumeMeta,
}

impl ScalarVolume {
    pub fn new(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        Self::with_meta(shape, data, VolumeMeta::default())
    }

    pub fn with_meta(shape: GridShape, data: Vec<f64>, meta: VolumeMeta) -> Result<Self> {
        if data.len() != shape.voxel_count() {
            return Err(Error::LengthMismatch {
                expected: shape.voxel_count(),
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if meta.scl_slope == 0.0 || !meta.scl_slope.is_finite() || !meta.scl_inter.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "scaling slope {} / intercept {} is not usable",
                meta.scl_slope, meta.scl_inter
            )));
        }
        if let Some(vs) = meta.voxel_size {
            if vs.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "voxel sizes must be positive, got {vs:?}"
                )));
            }
        }
        Ok(ScalarVolume { shape, data, meta })
    }

    pub fn filled(shape: GridShape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.voxel_count()])
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.voxel_count());
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: VolumeMeta) {
        self.meta = meta;
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same shape and meta, new voxel values.
    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_meta(
            self.shape,
            self.data.iter().map(|&v| f(v)).collect(),
            self.meta.clone(),
        )
    }

    pub(crate) fn ensure_same_shape(&self, other: GridShape) -> Result<()> {
        ensure_shape(self.shape, other)
    }
}

pub(crate) fn ensure_shape(expected: GridShape, found: GridShape) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// Voxel-wise probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap(ScalarVolume);

impl ProbabilityMap {
    pub fn new(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        Self::from_volume(ScalarVolume::new(shape, data)?)
    }

    pub fn from_volume(volume: ScalarVolume) -> Result<Self> {
        if let Some(index) = volume.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range {
                value: volume.data()[index],
                index,
                encoding: "probability in [0, 1]",
            });
        }
        Ok(ProbabilityMap(volume))
    }

    pub fn filled(shape: GridShape, p: f64) -> Result<Self> {
        Self::new(shape, vec![p; shape.voxel_count()])
    }

    pub fn shape(&self) -> GridShape {
        self.0.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn as_volume(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_volume(self) -> ScalarVolume {
        self.0
    }
}

/// Boolean labels on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: GridShape,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: GridShape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.voxel_count() {
            return Err(Error::LengthMismatch {
                expected: shape.voxel_count(),
                found: data.len(),
            });
        }
        Ok(BinaryMask { shape, data })
    }

    pub fn filled(shape: GridShape, value: bool) -> Self {
        BinaryMask {
            shape,
            data: vec![value; shape.voxel_count()],
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 0/1 volume, tagged for 8-bit storage.
    pub fn to_volume(&self) -> ScalarVolume {
        let meta = VolumeMeta {
            datatype: DataType::U8,
            ..VolumeMeta::default()
        };
        ScalarVolume {
            shape: self.shape,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            meta,
        }
    }
}
