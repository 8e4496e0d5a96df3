//! rawvol: a JSON sidecar (`<name>.rvol.json`) describing a headerless
//! binary payload (`<name>.rvol.bin`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{decode_payload, encode_payload, Encoding};
use super::{DataType, Endian, GridShape, ScalarVolume, VolumeMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVolHeader {
    pub shape: [usize; 3],
    pub dtype: String,
    pub order: String,
    pub endian: String,
}

impl RawVolHeader {
    fn datatype(&self) -> Result<DataType> {
        match self.dtype.as_str() {
            "f32" => Ok(DataType::F32),
            "u8" => Ok(DataType::U8),
            other => Err(Error::Parse(format!("rawvol dtype {other:?} is not f32 or u8"))),
        }
    }
}

pub(crate) fn payload_path(json_path: &Path) -> PathBuf {
    let name = json_path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let stem = name.strip_suffix(".rvol.json").unwrap_or(name);
    json_path.with_file_name(format!("{stem}.rvol.bin"))
}

pub fn read_rawvol(json_path: &Path) -> Result<ScalarVolume> {
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let header: RawVolHeader = serde_json::from_str(&text)?;
    if header.order != "x-fastest" {
        return Err(Error::Parse(format!("rawvol order {:?} unsupported", header.order)));
    }
    if header.endian != "little" {
        return Err(Error::Parse(format!("rawvol endian {:?} unsupported", header.endian)));
    }
    let datatype = header.datatype()?;
    let [nx, ny, nz] = header.shape;
    let shape = GridShape::new(nx, ny, nz)?;

    let bin = payload_path(json_path);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected = shape.voxel_count() * datatype.size_bytes();
    if bytes.len() != expected {
        return Err(Error::PayloadLength {
            expected,
            found: bytes.len(),
        });
    }
    let meta = VolumeMeta {
        datatype,
        endian: Endian::Little,
        ..VolumeMeta::default()
    };
    ScalarVolume::with_meta(shape, decode_payload(&bytes, datatype, Endian::Little), meta)
}

pub fn write_rawvol(vol: &ScalarVolume, json_path: &Path, encoding: Encoding) -> Result<()> {
    let dtype = match encoding.datatype {
        DataType::F32 => "f32",
        DataType::U8 => "u8",
        other => {
            return Err(Error::InvalidArgument(format!(
                "rawvol stores f32 or u8, not {}",
                other.name()
            )))
        }
    };
    if encoding.endian != Endian::Little {
        return Err(Error::InvalidArgument("rawvol payloads are little-endian".into()));
    }
    // rawvol carries no scaling fields
    let mut unscaled = vol.clone();
    unscaled.set_meta(VolumeMeta::default());
    let (payload, _, _) = encode_payload(&unscaled, encoding)?;
    let header = RawVolHeader {
        shape: vol.shape().dims(),
        dtype: dtype.to_string(),
        order: "x-fastest".to_string(),
        endian: "little".to_string(),
    };
    let json = serde_json::to_string_pretty(&header)?;
    fs::write(json_path, json).map_err(|e| Error::io(json_path, e))?;
    let bin = payload_path(json_path);
    fs::write(&bin, payload).map_err(|e| Error::io(&bin, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_path_swaps_suffix() {
        assert_eq!(
            payload_path(Path::new("/tmp/case/img.rvol.json")),
            PathBuf::from("/tmp/case/img.rvol.bin")
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.rvol.json");
        fs::write(
            &p,
            r#"{"shape":[1,1,1],"dtype":"u8","order":"x-fastest","endian":"little","extra":1}"#,
        )
        .unwrap();
        fs::write(payload_path(&p), [0u8]).unwrap();
        assert!(matches!(read_rawvol(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.rvol.json");
        fs::write(
            &p,
            r#"{"shape":[2,1,1],"dtype":"f32","order":"x-fastest","endian":"little"}"#,
        )
        .unwrap();
        let mut payload = 0.25f32.to_le_bytes().to_vec();
        payload.extend_from_slice(&(-3.0f32).to_le_bytes());
        fs::write(payload_path(&p), payload).unwrap();
        let v = read_rawvol(&p).unwrap();
        assert_eq!(v.data(), &[0.25, -3.0]);
    }

    #[test]
    fn rejects_f64() {
        let dir = tempfile::tempdir().unwrap();
        let v = ScalarVolume::filled(GridShape::new(1, 1, 1).unwrap(), 1.0).unwrap();
        let r = write_rawvol(&v, &dir.path().join("a.rvol.json"), Encoding::new(DataType::F64));
        assert!(r.is_err());
    }
}
