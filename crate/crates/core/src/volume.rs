//! Dense voxel grids and indexing.
//!
//! All grids use x-fastest linear order: `i = x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};

/// Grid extent in voxels along x, y and z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl From<[usize; 3]> for Dims {
    fn from(d: [usize; 3]) -> Self {
        Dims::new(d[0], d[1], d[2])
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        d.as_array()
    }
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Dims::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }

    /// Linear index without bounds checking beyond a debug assertion.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let yz = i / self.nx;
        (x, yz % self.ny, yz / self.ny)
    }

    /// Calls `f` with the linear index of every in-grid 6-connected neighbour of `i`.
    #[inline]
    pub fn for_each_neighbor6(&self, i: usize, mut f: impl FnMut(usize)) {
        let (x, y, z) = self.coords(i);
        let sx = 1;
        let sy = self.nx;
        let sz = self.nx * self.ny;
        if x > 0 {
            f(i - sx);
        }
        if x + 1 < self.nx {
            f(i + sx);
        }
        if y > 0 {
            f(i - sy);
        }
        if y + 1 < self.ny {
            f(i + sy);
        }
        if z > 0 {
            f(i - sz);
        }
        if z + 1 < self.nz {
            f(i + sz);
        }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Checked linear index `x + nx * (y + ny * z)`.
pub fn linear_index(x: i64, y: i64, z: i64, dims: Dims) -> Result<usize> {
    if !dims.contains(x, y, z) {
        return Err(MatteError::Range {
            x,
            y,
            z,
            dims: dims.as_array(),
        });
    }
    Ok(dims.index(x as usize, y as usize, z as usize))
}

/// A voxel position carried as its linear index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelIndex(usize);

impl VoxelIndex {
    pub fn new(linear: usize, dims: Dims) -> Result<Self> {
        if linear >= dims.len() {
            return Err(MatteError::Argument(format!(
                "linear index {linear} out of range for {dims}"
            )));
        }
        Ok(VoxelIndex(linear))
    }

    pub fn from_coords(x: i64, y: i64, z: i64, dims: Dims) -> Result<Self> {
        linear_index(x, y, z, dims).map(VoxelIndex)
    }

    pub fn linear(self) -> usize {
        self.0
    }

    pub fn coords(self, dims: Dims) -> (usize, usize, usize) {
        dims.coords(self.0)
    }
}

/// Physical voxel size in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    pub const fn isotropic(mm: f64) -> Self {
        Spacing([mm, mm, mm])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(MatteError::Validation(format!(
                "spacing must be strictly positive and finite, got {:?}",
                self.0
            )))
        }
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::isotropic(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Unit {
    #[serde(rename = "HU")]
    Hu,
    #[serde(rename = "normalized")]
    Normalized,
    #[default]
    #[serde(rename = "dimensionless")]
    Dimensionless,
}

/// CT observation window used to map HU into `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuWindow {
    pub low: f64,
    pub high: f64,
}

impl Default for HuWindow {
    fn default() -> Self {
        HuWindow {
            low: -1000.0,
            high: 400.0,
        }
    }
}

impl HuWindow {
    pub fn validate(&self) -> Result<()> {
        if self.low.is_finite() && self.high.is_finite() && self.low < self.high {
            Ok(())
        } else {
            Err(MatteError::Argument(format!(
                "observation window requires low < high, got [{}, {}]",
                self.low, self.high
            )))
        }
    }

    #[inline]
    pub fn normalize_value(&self, hu: f64) -> f64 {
        ((hu - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }

    /// Intensities ready for affinity construction. HU volumes are mapped
    /// through the window, anything else is passed through unchanged.
    pub fn intensities(&self, v: &Volume3) -> Result<Vec<f64>> {
        match v.unit() {
            Unit::Hu => {
                self.validate()?;
                Ok(v.data().iter().map(|&h| self.normalize_value(h)).collect())
            }
            _ => Ok(v.data().to_vec()),
        }
    }
}

fn check_len(dims: Dims, len: usize) -> Result<()> {
    if len != dims.len() {
        return Err(MatteError::Validation(format!(
            "data length {len} does not match dims {dims} ({} voxels)",
            dims.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_same_dims(a: Dims, b: Dims, what: &str) -> Result<()> {
    if a != b {
        return Err(MatteError::Shape(format!("{what}: dims {a} vs {b}")));
    }
    Ok(())
}

/// Dense scalar volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3 {
    dims: Dims,
    spacing: Spacing,
    unit: Unit,
    data: Vec<f64>,
}

impl Volume3 {
    pub fn new(dims: Dims, spacing: Spacing, unit: Unit, data: Vec<f64>) -> Result<Self> {
        check_len(dims, data.len())?;
        spacing.validate()?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatteError::Validation(format!(
                "non-finite value {} at voxel {i}",
                data[i]
            )));
        }
        Ok(Volume3 {
            dims,
            spacing,
            unit,
            data,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, unit: Unit, value: f64) -> Result<Self> {
        Volume3::new(dims, spacing, unit, vec![value; dims.len()])
    }

    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        unit: Unit,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume3::new(dims, spacing, unit, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }
}

/// Per-voxel opacity in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatte {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl AlphaMatte {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        check_len(dims, data.len())?;
        spacing.validate()?;
        if let Some(i) = data.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return Err(MatteError::Validation(format!(
                "alpha value {} at voxel {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(AlphaMatte {
            dims,
            spacing,
            data,
        })
    }

    /// Clamps every value into `[0, 1]`; NaN is rejected.
    pub fn from_clamped(dims: Dims, spacing: Spacing, mut data: Vec<f64>) -> Result<Self> {
        for a in data.iter_mut() {
            *a = a.clamp(0.0, 1.0);
        }
        AlphaMatte::new(dims, spacing, data)
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f64) -> Result<Self> {
        AlphaMatte::new(dims, spacing, vec![value; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn to_volume(&self) -> Volume3 {
        Volume3 {
            dims: self.dims,
            spacing: self.spacing,
            unit: Unit::Dimensionless,
            data: self.data.clone(),
        }
    }

    pub fn from_volume(v: &Volume3) -> Result<Self> {
        AlphaMatte::new(v.dims(), v.spacing(), v.data().to_vec())
    }

    /// `{alpha >= threshold}` as a binary mask.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|&a| a >= threshold).collect(),
        }
    }
}

/// A single annotator's binary segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    dims: Dims,
    spacing: Spacing,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<bool>) -> Result<Self> {
        check_len(dims, data.len())?;
        spacing.validate()?;
        Ok(BinaryMask {
            dims,
            spacing,
            data,
        })
    }

    pub fn from_u8(dims: Dims, spacing: Spacing, bytes: &[u8]) -> Result<Self> {
        let data = bytes
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(MatteError::Validation(format!(
                    "mask value {other} at voxel {i}; masks hold only 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        BinaryMask::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&b| b as u8).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_examples() {
        assert_eq!(linear_index(0, 0, 0, Dims::cube(4)).unwrap(), 0);
        assert_eq!(linear_index(3, 3, 3, Dims::cube(4)).unwrap(), 63);
        assert_eq!(linear_index(1, 2, 3, Dims::new(4, 5, 6)).unwrap(), 69);
    }

    #[test]
    fn linear_index_out_of_bounds() {
        let d = Dims::new(4, 5, 6);
        for (x, y, z) in [(4, 0, 0), (0, 5, 0), (0, 0, 6), (-1, 0, 0)] {
            assert!(matches!(
                linear_index(x, y, z, d),
                Err(MatteError::Range { .. })
            ));
        }
    }

    #[test]
    fn index_bijection_exhaustive() {
        for dims in [Dims::new(1, 1, 1), Dims::new(3, 4, 5), Dims::new(7, 2, 3)] {
            let mut seen = vec![false; dims.len()];
            for z in 0..dims.nz {
                for y in 0..dims.ny {
                    for x in 0..dims.nx {
                        let i = linear_index(x as i64, y as i64, z as i64, dims).unwrap();
                        assert!(!seen[i]);
                        seen[i] = true;
                        assert_eq!(dims.coords(i), (x, y, z));
                    }
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }

    #[test]
    fn neighbor6_counts() {
        let d = Dims::cube(3);
        let mut n = 0;
        d.for_each_neighbor6(d.index(1, 1, 1), |_| n += 1);
        assert_eq!(n, 6);
        n = 0;
        d.for_each_neighbor6(0, |_| n += 1);
        assert_eq!(n, 3);
    }

    #[test]
    fn volume_rejects_bad_input() {
        let d = Dims::cube(2);
        assert!(Volume3::new(d, Spacing::default(), Unit::Hu, vec![0.0; 7]).is_err());
        let mut data = vec![0.0; 8];
        data[3] = f64::NAN;
        assert!(Volume3::new(d, Spacing::default(), Unit::Hu, data).is_err());
        assert!(Volume3::new(d, Spacing([1.0, 0.0, 1.0]), Unit::Hu, vec![0.0; 8]).is_err());
    }

    #[test]
    fn alpha_rejects_out_of_range() {
        let d = Dims::cube(2);
        assert!(AlphaMatte::new(d, Spacing::default(), vec![1.5; 8]).is_err());
        let a = AlphaMatte::from_clamped(d, Spacing::default(), vec![1.5; 8]).unwrap();
        assert!(a.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn window_normalization() {
        let w = HuWindow::default();
        assert_eq!(w.normalize_value(-1000.0), 0.0);
        assert_eq!(w.normalize_value(400.0), 1.0);
        assert_eq!(w.normalize_value(-300.0), 0.5);
        assert_eq!(w.normalize_value(2000.0), 1.0);
    }
}
