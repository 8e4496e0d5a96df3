use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{nifti, rawvol, BinaryMask, DataType, Endian, ScalarVolume, VolumeMeta};
use crate::{Error, Result};

/// Target element type and byte order for [`save_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub datatype: DataType,
    pub endian: Endian,
}

impl Encoding {
    pub fn new(datatype: DataType) -> Self {
        Encoding {
            datatype,
            endian: Endian::Little,
        }
    }

    pub fn with_endian(datatype: DataType, endian: Endian) -> Self {
        Encoding { datatype, endian }
    }
}

enum Format {
    Nifti,
    RawVol,
}

fn format_of(path: &Path) -> Result<Format> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    if name.ends_with(".nii") {
        Ok(Format::Nifti)
    } else if name.ends_with(".rvol.json") {
        Ok(Format::RawVol)
    } else {
        Err(Error::InvalidArgument(format!(
            "{}: expected a .nii or .rvol.json path",
            path.display()
        )))
    }
}

/// Reads a volume, applying any intensity scaling recorded in the file.
pub fn load_volume(path: impl AsRef<Path>) -> Result<(VolumeMeta, ScalarVolume)> {
    let path = path.as_ref();
    let vol = match format_of(path)? {
        Format::Nifti => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            nifti::read_nifti(&bytes)?
        }
        Format::RawVol => rawvol::read_rawvol(path)?,
    };
    Ok((vol.meta().clone(), vol))
}

pub fn save_volume(vol: &ScalarVolume, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    match format_of(path)? {
        Format::Nifti => {
            let bytes = nifti::write_nifti(vol, encoding)?;
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        Format::RawVol => rawvol::write_rawvol(vol, path, encoding),
    }
}

/// Saves a mask as 8-bit {0, 1}.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_volume(&mask.to_volume(), path, Encoding::new(DataType::U8))
}

/// Loads a label volume; any nonzero voxel is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let (_, vol) = load_volume(path)?;
    BinaryMask::new(vol.shape(), vol.data().iter().map(|&v| v != 0.0).collect())
}

/// Stored (pre-scaling) value for `v` under `encoding`, checked to be representable.
fn stored_value(
    v: f64,
    index: usize,
    datatype: DataType,
    slope: f32,
    inter: f32,
) -> Result<f64> {
    let range_err = || Error::Range {
        value: v,
        index,
        encoding: datatype.name(),
    };
    match datatype {
        DataType::U8 | DataType::I16 => {
            let (lo, hi) = if datatype == DataType::U8 {
                (0.0, 255.0)
            } else {
                (-32768.0, 32767.0)
            };
            let raw = ((v - inter as f64) / slope as f64).round();
            if !(lo..=hi).contains(&raw) || raw * slope as f64 + inter as f64 != v {
                return Err(range_err());
            }
            Ok(raw)
        }
        DataType::F32 => {
            if !(v as f32).is_finite() {
                return Err(range_err());
            }
            Ok(v)
        }
        DataType::F64 => Ok(v),
    }
}

/// Encodes voxel values; returns the payload and the (slope, intercept) to record.
pub(crate) fn encode_payload(vol: &ScalarVolume, encoding: Encoding) -> Result<(Vec<u8>, f32, f32)> {
    let meta = vol.meta();
    let (slope, inter) = if encoding.datatype.is_integer() {
        (meta.scl_slope as f32, meta.scl_inter as f32)
    } else {
        (1.0, 0.0)
    };
    if slope == 0.0 || !slope.is_finite() || !inter.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scaling {}/{} does not fit a 32-bit header field",
            meta.scl_slope, meta.scl_inter
        )));
    }
    let dt = encoding.datatype;
    let mut out = Vec::with_capacity(vol.data().len() * dt.size_bytes());
    for (i, &v) in vol.data().iter().enumerate() {
        let raw = stored_value(v, i, dt, slope, inter)?;
        match (dt, encoding.endian) {
            (DataType::U8, _) => out.push(raw as u8),
            (DataType::I16, Endian::Little) => out.extend_from_slice(&(raw as i16).to_le_bytes()),
            (DataType::I16, Endian::Big) => out.extend_from_slice(&(raw as i16).to_be_bytes()),
            (DataType::F32, Endian::Little) => out.extend_from_slice(&(raw as f32).to_le_bytes()),
            (DataType::F32, Endian::Big) => out.extend_from_slice(&(raw as f32).to_be_bytes()),
            (DataType::F64, Endian::Little) => out.extend_from_slice(&raw.to_le_bytes()),
            (DataType::F64, Endian::Big) => out.extend_from_slice(&raw.to_be_bytes()),
        }
    }
    Ok((out, slope, inter))
}

/// Decodes raw element values (no scaling applied).
pub(crate) fn decode_payload(bytes: &[u8], datatype: DataType, endian: Endian) -> Vec<f64> {
    let size = datatype.size_bytes();
    bytes
        .chunks_exact(size)
        .map(|c| match (datatype, endian) {
            (DataType::U8, _) => c[0] as f64,
            (DataType::I16, Endian::Little) => i16::from_le_bytes([c[0], c[1]]) as f64,
            (DataType::I16, Endian::Big) => i16::from_be_bytes([c[0], c[1]]) as f64,
            (DataType::F32, Endian::Little) => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            (DataType::F32, Endian::Big) => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            (DataType::F64, Endian::Little) => f64::from_le_bytes(c.try_into().unwrap()),
            (DataType::F64, Endian::Big) => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect()
}
