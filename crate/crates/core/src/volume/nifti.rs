//! Single-file NIfTI-1 (`n+1\0`) reader and writer.
//!
//! Only the fields needed to recover a 3D grid are interpreted: dim,
//! datatype, bitpix, pixdim[1..=3], vox_offset, scl_slope, scl_inter and
//! magic. qform/sform are written as unknown (code 0) and ignored on read.

use super::io::{decode_payload, encode_payload, Encoding};
use super::{DataType, Endian, GridShape, ScalarVolume, VolumeMeta};
use crate::{Error, Result};

pub const NIFTI_HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const NIFTI_VOX_OFFSET: usize = 352;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_MAGIC: usize = 344;

const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
const MAGIC_PAIR: [u8; 4] = *b"ni1\0";

struct HeaderReader<'a> {
    buf: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn bytes<const N: usize>(&self, off: usize) -> [u8; N] {
        self.buf[off..off + N].try_into().unwrap()
    }

    fn i16(&self, off: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.bytes(off)),
            Endian::Big => i16::from_be_bytes(self.bytes(off)),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.bytes(off)),
            Endian::Big => f32::from_be_bytes(self.bytes(off)),
        }
    }
}

struct HeaderWriter {
    buf: Vec<u8>,
    endian: Endian,
}

impl HeaderWriter {
    fn put(&mut self, off: usize, bytes: &[u8]) {
        self.buf[off..off + bytes.len()].copy_from_slice(bytes);
    }

    fn i16(&mut self, off: usize, v: i16) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.put(off, &b);
    }

    fn i32(&mut self, off: usize, v: i32) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.put(off, &b);
    }

    fn f32(&mut self, off: usize, v: f32) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.put(off, &b);
    }
}

fn detect_endian(buf: &[u8]) -> Result<Endian> {
    let raw: [u8; 4] = buf[0..4].try_into().unwrap();
    if i32::from_le_bytes(raw) == NIFTI_HEADER_SIZE as i32 {
        Ok(Endian::Little)
    } else if i32::from_be_bytes(raw) == NIFTI_HEADER_SIZE as i32 {
        Ok(Endian::Big)
    } else {
        Err(Error::InvalidHeader(format!(
            "sizeof_hdr is neither 348 nor byte-swapped 348 (bytes {raw:02x?})"
        )))
    }
}

/// Parses a complete single-file NIfTI-1 image.
pub fn read_nifti(buf: &[u8]) -> Result<ScalarVolume> {
    if buf.len() < NIFTI_HEADER_SIZE {
        return Err(Error::Truncated {
            needed: NIFTI_HEADER_SIZE,
            found: buf.len(),
        });
    }
    let endian = detect_endian(buf)?;
    let h = HeaderReader { buf, endian };

    let magic: [u8; 4] = h.bytes(OFF_MAGIC);
    if magic == MAGIC_PAIR {
        return Err(Error::BadMagic {
            found: magic,
            reason: "paired .hdr/.img files are not supported",
        });
    }
    if magic != MAGIC_SINGLE {
        return Err(Error::BadMagic {
            found: magic,
            reason: "not a single-file NIfTI-1 image",
        });
    }

    let dim: Vec<i16> = (0..8).map(|i| h.i16(OFF_DIM + 2 * i)).collect();
    match dim[0] {
        3 => {}
        4 if dim[4] == 1 => {}
        _ => {
            return Err(Error::InvalidHeader(format!(
                "only 3D volumes are supported (dim = {dim:?})"
            )))
        }
    }
    if dim[1..4].iter().any(|&d| d < 1) {
        return Err(Error::InvalidHeader(format!("non-positive extent in dim = {dim:?}")));
    }
    let shape = GridShape::new(dim[1] as usize, dim[2] as usize, dim[3] as usize)?;

    let datatype = DataType::from_code(h.i16(OFF_DATATYPE))?;
    let bitpix = h.i16(OFF_BITPIX);
    if bitpix as usize != datatype.size_bytes() * 8 {
        return Err(Error::InvalidHeader(format!(
            "bitpix {bitpix} does not match datatype {}",
            datatype.name()
        )));
    }

    let vox_offset = h.f32(OFF_VOX_OFFSET);
    if !(vox_offset >= NIFTI_VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::InvalidHeader(format!(
            "vox_offset {vox_offset} must be an integer >= {NIFTI_VOX_OFFSET}"
        )));
    }
    let vox_offset = vox_offset as usize;

    let pixdim: Vec<f64> = (1..4).map(|i| h.f32(OFF_PIXDIM + 4 * i) as f64).collect();
    let voxel_size = if pixdim.iter().all(|&p| p > 0.0 && p.is_finite()) {
        Some([pixdim[0], pixdim[1], pixdim[2]])
    } else {
        None
    };

    let mut slope = h.f32(OFF_SCL_SLOPE) as f64;
    let mut inter = h.f32(OFF_SCL_INTER) as f64;
    if slope == 0.0 {
        slope = 1.0;
        inter = 0.0;
    }
    if !slope.is_finite() || !inter.is_finite() {
        return Err(Error::InvalidHeader(format!(
            "scl_slope {slope} / scl_inter {inter} not finite"
        )));
    }

    let expected = shape.voxel_count() * datatype.size_bytes();
    let found = buf.len().saturating_sub(vox_offset);
    if buf.len() < vox_offset || found != expected {
        return Err(Error::PayloadLength { expected, found });
    }

    let raw = decode_payload(&buf[vox_offset..], datatype, endian);
    let data: Vec<f64> = if slope == 1.0 && inter == 0.0 {
        raw
    } else {
        raw.into_iter().map(|v| v * slope + inter).collect()
    };
    let meta = VolumeMeta {
        voxel_size,
        datatype,
        scl_slope: slope,
        scl_inter: inter,
        endian,
    };
    ScalarVolume::with_meta(shape, data, meta)
}

/// Serializes `vol` as a single-file NIfTI-1 image (header, empty extension, payload).
pub fn write_nifti(vol: &ScalarVolume, encoding: Encoding) -> Result<Vec<u8>> {
    let shape = vol.shape();
    for (axis, n) in shape.dims().into_iter().enumerate() {
        if n > i16::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "axis {axis} extent {n} exceeds the NIfTI-1 limit"
            )));
        }
    }
    let (payload, slope, inter) = encode_payload(vol, encoding)?;

    let mut h = HeaderWriter {
        buf: vec![0u8; NIFTI_VOX_OFFSET],
        endian: encoding.endian,
    };
    h.i32(0, NIFTI_HEADER_SIZE as i32);
    let dim = [3, shape.nx as i16, shape.ny as i16, shape.nz as i16, 1, 1, 1, 1];
    for (i, d) in dim.into_iter().enumerate() {
        h.i16(OFF_DIM + 2 * i, d);
    }
    h.i16(OFF_DATATYPE, encoding.datatype.code());
    h.i16(OFF_BITPIX, (encoding.datatype.size_bytes() * 8) as i16);
    let vs = vol.meta().voxel_size.unwrap_or([1.0; 3]);
    let pixdim = [1.0, vs[0] as f32, vs[1] as f32, vs[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.into_iter().enumerate() {
        h.f32(OFF_PIXDIM + 4 * i, p);
    }
    h.f32(OFF_VOX_OFFSET, NIFTI_VOX_OFFSET as f32);
    h.f32(OFF_SCL_SLOPE, slope);
    h.f32(OFF_SCL_INTER, inter);
    // NIFTI_UNITS_MM
    h.buf[OFF_XYZT_UNITS] = 2;
    h.put(OFF_DESCRIP, b"segqc");
    h.put(OFF_MAGIC, &MAGIC_SINGLE);

    let mut out = h.buf;
    out.extend_from_slice(&payload);
    Ok(out)
}
