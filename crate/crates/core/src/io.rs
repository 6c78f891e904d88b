//! On-disk volume format: a JSON header plus a raw little-endian payload.
//!
//! ```json
//! {"dims":[nx,ny,nz],"spacing_mm":[sx,sy,sz],"dtype":"f32","byte_order":"little",
//!  "unit":"HU","data_file":"case.raw"}
//! ```
//!
//! `data_file` is resolved relative to the header's directory. Volumes and
//! mattes are stored as `f32`, masks and trimaps as `u8`. Writing a volume
//! rounds its `f64` samples to `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::volume::{AlphaMatte, BinaryMask, Dims, Spacing, Unit, Volume3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: Dtype,
    pub byte_order: ByteOrder,
    pub unit: Unit,
    pub data_file: String,
}

/// Raw payload as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

fn data_path_for(header_path: &Path) -> (PathBuf, String) {
    let stem = header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".to_string());
    let name = format!("{stem}.raw");
    let path = header_path
        .parent()
        .map(|p| p.join(&name))
        .unwrap_or_else(|| PathBuf::from(&name));
    (path, name)
}

/// Reads a header and its payload, checking the payload length exactly.
pub fn read_raw(header_path: impl AsRef<Path>) -> Result<(VolumeHeader, Payload)> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| MatteError::io(header_path, e))?;
    let header: VolumeHeader = serde_json::from_str(&text)
        .map_err(|e| MatteError::Parse(format!("{}: {e}", header_path.display())))?;
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| MatteError::io(&data_path, e))?;
    let n = Dims::from(header.dims).len();
    let payload = match header.dtype {
        Dtype::F32 => {
            if bytes.len() != 4 * n {
                return Err(MatteError::Format(format!(
                    "{}: expected {n} f32 values ({} bytes), found {} bytes",
                    data_path.display(),
                    4 * n,
                    bytes.len()
                )));
            }
            Payload::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
        Dtype::U8 => {
            if bytes.len() != n {
                return Err(MatteError::Format(format!(
                    "{}: expected {n} u8 values, found {} bytes",
                    data_path.display(),
                    bytes.len()
                )));
            }
            Payload::U8(bytes)
        }
    };
    Ok((header, payload))
}

/// Writes `payload` next to `header_path` and then the header itself.
pub fn write_raw(
    header_path: impl AsRef<Path>,
    dims: Dims,
    spacing: Spacing,
    unit: Unit,
    payload: &Payload,
) -> Result<()> {
    let header_path = header_path.as_ref();
    let (data_path, data_name) = data_path_for(header_path);
    let (dtype, bytes) = match payload {
        Payload::F32(v) => (
            Dtype::F32,
            v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>(),
        ),
        Payload::U8(v) => (Dtype::U8, v.clone()),
    };
    let header = VolumeHeader {
        dims: dims.as_array(),
        spacing_mm: spacing.0,
        dtype,
        byte_order: ByteOrder::Little,
        unit,
        data_file: data_name,
    };
    fs::write(&data_path, bytes).map_err(|e| MatteError::io(&data_path, e))?;
    let mut text = serde_json::to_string_pretty(&header)
        .map_err(|e| MatteError::Format(format!("header serialization: {e}")))?;
    text.push('\n');
    fs::write(header_path, text).map_err(|e| MatteError::io(header_path, e))?;
    Ok(())
}

/// Reads a scalar volume. `u8` payloads are widened to reals.
pub fn read_volume(header_path: impl AsRef<Path>) -> Result<Volume3> {
    let (h, payload) = read_raw(header_path)?;
    let data = match payload {
        Payload::F32(v) => v.into_iter().map(f64::from).collect(),
        Payload::U8(v) => v.into_iter().map(f64::from).collect(),
    };
    Volume3::new(h.dims.into(), Spacing(h.spacing_mm), h.unit, data)
}

pub fn write_volume(v: &Volume3, header_path: impl AsRef<Path>) -> Result<()> {
    let payload = Payload::F32(v.data().iter().map(|&x| x as f32).collect());
    write_raw(header_path, v.dims(), v.spacing(), v.unit(), &payload)
}

pub fn read_matte(header_path: impl AsRef<Path>) -> Result<AlphaMatte> {
    let v = read_volume(header_path)?;
    AlphaMatte::from_volume(&v)
}

pub fn write_matte(a: &AlphaMatte, header_path: impl AsRef<Path>) -> Result<()> {
    let payload = Payload::F32(a.data().iter().map(|&x| x as f32).collect());
    write_raw(
        header_path,
        a.dims(),
        a.spacing(),
        Unit::Dimensionless,
        &payload,
    )
}

pub fn read_mask(header_path: impl AsRef<Path>) -> Result<BinaryMask> {
    let (h, payload) = read_raw(header_path)?;
    match payload {
        Payload::U8(bytes) => BinaryMask::from_u8(h.dims.into(), Spacing(h.spacing_mm), &bytes),
        Payload::F32(_) => Err(MatteError::Format("masks must use dtype u8".into())),
    }
}

pub fn write_mask(m: &BinaryMask, header_path: impl AsRef<Path>) -> Result<()> {
    write_raw(
        header_path,
        m.dims(),
        m.spacing(),
        Unit::Dimensionless,
        &Payload::U8(m.to_u8()),
    )
}
