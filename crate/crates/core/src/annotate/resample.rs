//! Lesion-centred cropping and isotropic resampling.

use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::volume::{BinaryMask, Dims, Spacing, Volume3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropSpec {
    pub center_vox: [usize; 3],
    /// Transverse crop edge in source voxels.
    pub crop_xy: usize,
    /// Inclusive slice range of the lesion; the centre slice alone when absent.
    pub z_span: Option<(usize, usize)>,
    pub pad_z_slices: usize,
    pub target_spacing_mm: f64,
    /// Value for crop regions outside the source grid.
    pub fill_value: f64,
}

impl Default for CropSpec {
    fn default() -> Self {
        CropSpec {
            center_vox: [0, 0, 0],
            crop_xy: 128,
            z_span: None,
            pad_z_slices: 3,
            target_spacing_mm: 0.5,
            fill_value: -1000.0,
        }
    }
}

/// Inclusive z range of the slices where `mask` is set, if any.
pub fn lesion_z_span(mask: &BinaryMask) -> Option<(usize, usize)> {
    let d = mask.dims();
    let plane = d.nx * d.ny;
    let mut span: Option<(usize, usize)> = None;
    for z in 0..d.nz {
        if mask.data()[z * plane..(z + 1) * plane].iter().any(|&b| b) {
            span = Some(span.map_or((z, z), |(lo, _)| (lo, z)));
        }
    }
    span
}

struct CropBox {
    origin: [i64; 3],
    dims: Dims,
}

fn crop_box(src: Dims, spec: &CropSpec) -> Result<CropBox> {
    let [cx, cy, cz] = spec.center_vox;
    if cx >= src.nx || cy >= src.ny || cz >= src.nz {
        return Err(MatteError::Argument(format!(
            "crop centre {:?} outside grid {src}",
            spec.center_vox
        )));
    }
    if spec.crop_xy == 0 {
        return Err(MatteError::Argument("crop_xy must be positive".into()));
    }
    if !(spec.target_spacing_mm.is_finite() && spec.target_spacing_mm > 0.0) {
        return Err(MatteError::Argument(format!(
            "target spacing must be positive, got {}",
            spec.target_spacing_mm
        )));
    }
    let (z_lo, z_hi) = spec.z_span.unwrap_or((cz, cz));
    if z_lo > z_hi || z_hi >= src.nz {
        return Err(MatteError::Argument(format!(
            "lesion slice span ({z_lo}, {z_hi}) invalid for {} slices",
            src.nz
        )));
    }
    let half = (spec.crop_xy / 2) as i64;
    let pad = spec.pad_z_slices as i64;
    let nz = (z_hi - z_lo) as i64 + 1 + 2 * pad;
    Ok(CropBox {
        origin: [cx as i64 - half, cy as i64 - half, z_lo as i64 - pad],
        dims: Dims::new(spec.crop_xy, spec.crop_xy, nz as usize),
    })
}

fn resampled_len(n: usize, src_spacing: f64, target: f64) -> usize {
    (((n - 1) as f64) * src_spacing / target + 1e-9).floor() as usize + 1
}

/// Crops a lesion-centred box (filling outside the grid) and trilinearly
/// resamples it to isotropic `target_spacing_mm`.
pub fn crop_and_resample(v: &Volume3, spec: &CropSpec) -> Result<Volume3> {
    let src = v.dims();
    let b = crop_box(src, spec)?;
    let cropped = sample_box(&b, src, |i| v.data()[i], spec.fill_value);
    let sp = v.spacing().0;
    let t = spec.target_spacing_mm;
    let out_dims = Dims::new(
        resampled_len(b.dims.nx, sp[0], t),
        resampled_len(b.dims.ny, sp[1], t),
        resampled_len(b.dims.nz, sp[2], t),
    );
    let ratio = [t / sp[0], t / sp[1], t / sp[2]];
    let cd = b.dims;
    Volume3::from_fn(out_dims, Spacing::isotropic(t), v.unit(), |x, y, z| {
        let (x0, x1, fx) = bracket(x as f64 * ratio[0], cd.nx);
        let (y0, y1, fy) = bracket(y as f64 * ratio[1], cd.ny);
        let (z0, z1, fz) = bracket(z as f64 * ratio[2], cd.nz);
        let at = |xi, yi, zi| cropped[cd.index(xi, yi, zi)];
        let lerp = |a: f64, b: f64, f: f64| (1.0 - f) * a + f * b;
        let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), fx);
        let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), fx);
        let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), fx);
        let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    })
}

/// Same geometry as [`crop_and_resample`] with nearest-neighbour sampling,
/// so the result stays binary. Outside the grid is empty.
pub fn crop_and_resample_mask(m: &BinaryMask, spacing: Spacing, spec: &CropSpec) -> Result<BinaryMask> {
    let src = m.dims();
    let b = crop_box(src, spec)?;
    let cropped = sample_box(&b, src, |i| m.data()[i], false);
    let sp = spacing.0;
    let t = spec.target_spacing_mm;
    let cd = b.dims;
    let out_dims = Dims::new(
        resampled_len(cd.nx, sp[0], t),
        resampled_len(cd.ny, sp[1], t),
        resampled_len(cd.nz, sp[2], t),
    );
    let ratio = [t / sp[0], t / sp[1], t / sp[2]];
    let nearest = |u: f64, n: usize| (u.round() as usize).min(n - 1);
    let mut data = Vec::with_capacity(out_dims.len());
    for z in 0..out_dims.nz {
        for y in 0..out_dims.ny {
            for x in 0..out_dims.nx {
                data.push(
                    cropped[cd.index(
                        nearest(x as f64 * ratio[0], cd.nx),
                        nearest(y as f64 * ratio[1], cd.ny),
                        nearest(z as f64 * ratio[2], cd.nz),
                    )],
                );
            }
        }
    }
    BinaryMask::new(out_dims, Spacing::isotropic(t), data)
}

fn sample_box<T: Copy>(b: &CropBox, src: Dims, at: impl Fn(usize) -> T, fill: T) -> Vec<T> {
    let mut out = Vec::with_capacity(b.dims.len());
    for z in 0..b.dims.nz as i64 {
        for y in 0..b.dims.ny as i64 {
            for x in 0..b.dims.nx as i64 {
                let (sx, sy, sz) = (x + b.origin[0], y + b.origin[1], z + b.origin[2]);
                out.push(if src.contains(sx, sy, sz) {
                    at(src.index(sx as usize, sy as usize, sz as usize))
                } else {
                    fill
                });
            }
        }
    }
    out
}

#[inline]
fn bracket(u: f64, n: usize) -> (usize, usize, f64) {
    let i0 = (u.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, u - i0 as f64)
}
