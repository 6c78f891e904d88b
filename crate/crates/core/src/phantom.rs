//! Synthetic CT-like volumes with analytically known alpha.
//!
//! Opacity profiles are radial: fully opaque inside the core, a cubic
//! smoothstep down to zero across the falloff band. The volume is the
//! composite `α·F + (1 − α)·B`, optionally with seeded Gaussian noise.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotate::{trimap_from_masks, write_trimap, Trimap};
use crate::error::{MatteError, Result};
use crate::io::{write_mask, write_matte, write_volume};
use crate::volume::{check_same_dims, AlphaMatte, BinaryMask, Dims, Spacing, Unit, Volume3};

/// Opacity levels of the four simulated annotators.
pub const RATER_THRESHOLDS: [f64; 4] = [0.3, 0.45, 0.55, 0.7];
pub const RATER_DILATION: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhantomShape {
    Sphere,
    /// Two identical spheres mirrored about the x mid-plane.
    TwoSpheres,
    /// A sphere whose outer core half has partial opacity set by `fg_shell_hu`.
    Shell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    #[serde(default)]
    pub spacing: Spacing,
    pub shape: PhantomShape,
    pub core_radius_vox: f64,
    pub falloff_radius_vox: f64,
    pub fg_hu: f64,
    pub bg_hu: f64,
    #[serde(default)]
    pub fg_shell_hu: Option<f64>,
    #[serde(default)]
    pub noise_sigma_hu: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn sphere(n: usize, core: f64, falloff: f64) -> Self {
        PhantomSpec {
            dims: Dims::cube(n),
            spacing: Spacing::default(),
            shape: PhantomShape::Sphere,
            core_radius_vox: core,
            falloff_radius_vox: falloff,
            fg_hu: 100.0,
            bg_hu: -1000.0,
            fg_shell_hu: None,
            noise_sigma_hu: 0.0,
            seed: 0,
        }
    }

    fn shell_alpha(&self) -> Result<f64> {
        let hu = self.fg_shell_hu.ok_or_else(|| {
            MatteError::Argument("SHELL phantoms need fg_shell_hu".into())
        })?;
        let a = (hu - self.bg_hu) / (self.fg_hu - self.bg_hu);
        if !(a > 0.0 && a < 1.0) {
            return Err(MatteError::Argument(format!(
                "fg_shell_hu {hu} must lie strictly between bg_hu and fg_hu"
            )));
        }
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let (core, fall) = (self.core_radius_vox, self.falloff_radius_vox);
        if !(core > 0.0 && core < fall && fall.is_finite()) {
            return Err(MatteError::Argument(format!(
                "need 0 < core_radius < falloff_radius, got {core} and {fall}"
            )));
        }
        self.spacing.validate()?;
        if !(self.fg_hu.is_finite() && self.bg_hu.is_finite()) || self.fg_hu == self.bg_hu {
            return Err(MatteError::Argument("fg_hu and bg_hu must be finite and distinct".into()));
        }
        if !(self.noise_sigma_hu.is_finite() && self.noise_sigma_hu >= 0.0) {
            return Err(MatteError::Argument("noise_sigma_hu must be non-negative".into()));
        }
        let half = |n: usize| (n as f64 - 1.0) / 2.0;
        let d = self.dims;
        let fits_yz = fall <= half(d.ny) && fall <= half(d.nz);
        let fits_x = match self.shape {
            PhantomShape::TwoSpheres => fall <= (d.nx as f64 - 1.0) / 4.0,
            _ => fall <= half(d.nx),
        };
        if !(fits_x && fits_yz) {
            return Err(MatteError::Argument(format!(
                "falloff radius {fall} does not fit inside grid {d} for {:?}",
                self.shape
            )));
        }
        if self.shape == PhantomShape::Shell {
            self.shell_alpha()?;
        }
        Ok(())
    }

    /// Distance of voxel `(x, y, z)` from the nearest lesion centre. The sum
    /// of squares is formed in sorted order so axis-permuted and mirrored
    /// voxels get identical radii.
    fn radius(&self, x: usize, y: usize, z: usize) -> f64 {
        let d = self.dims;
        let mut dx = (x as f64 - (d.nx as f64 - 1.0) / 2.0).abs();
        if self.shape == PhantomShape::TwoSpheres {
            dx = (dx - (d.nx as f64 - 1.0) / 4.0).abs();
        }
        let dy = (y as f64 - (d.ny as f64 - 1.0) / 2.0).abs();
        let dz = (z as f64 - (d.nz as f64 - 1.0) / 2.0).abs();
        let mut sq = [dx * dx, dy * dy, dz * dz];
        sq.sort_by(f64::total_cmp);
        (sq[0] + sq[1] + sq[2]).sqrt()
    }

    /// Ground-truth opacity at distance `r` from the centre.
    pub fn alpha_at(&self, r: f64) -> f64 {
        let (core, fall) = (self.core_radius_vox, self.falloff_radius_vox);
        let peak = match self.shape {
            PhantomShape::Shell if r > core / 2.0 => self.shell_alpha().unwrap_or(1.0),
            _ => 1.0,
        };
        if r <= core {
            peak
        } else if r < fall {
            let t = (fall - r) / (fall - core);
            peak * t * t * (3.0 - 2.0 * t)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomCase {
    pub volume: Volume3,
    pub gt_alpha: AlphaMatte,
    pub gt_trimap: Trimap,
    pub masks: Vec<BinaryMask>,
}

/// Voxelwise `α·F + (1 − α)·B`.
pub fn composite(alpha: &AlphaMatte, fg: &Volume3, bg: &Volume3) -> Result<Volume3> {
    check_same_dims(alpha.dims(), fg.dims(), "alpha and foreground")?;
    check_same_dims(alpha.dims(), bg.dims(), "alpha and background")?;
    let data = alpha
        .data()
        .iter()
        .zip(fg.data().iter().zip(bg.data()))
        .map(|(&a, (&f, &b))| a * f + (1.0 - a) * b)
        .collect();
    Volume3::new(alpha.dims(), fg.spacing(), fg.unit(), data)
}

pub fn generate(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let d = spec.dims;
    let mut alpha = Vec::with_capacity(d.len());
    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                alpha.push(spec.alpha_at(spec.radius(x, y, z)));
            }
        }
    }
    let gt_alpha = AlphaMatte::new(d, spec.spacing, alpha)?;
    let fg = Volume3::filled(d, spec.spacing, Unit::Hu, spec.fg_hu)?;
    let bg = Volume3::filled(d, spec.spacing, Unit::Hu, spec.bg_hu)?;
    let clean = composite(&gt_alpha, &fg, &bg)?;
    let volume = if spec.noise_sigma_hu > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma_hu)
            .map_err(|e| MatteError::Argument(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noisy = clean.data().iter().map(|&v| v + normal.sample(&mut rng)).collect();
        Volume3::new(d, spec.spacing, Unit::Hu, noisy)?
    } else {
        clean
    };
    let masks: Vec<BinaryMask> = RATER_THRESHOLDS.iter().map(|&t| gt_alpha.threshold(t)).collect();
    let gt_trimap = trimap_from_masks(&masks, RATER_DILATION)?;
    Ok(PhantomCase {
        volume,
        gt_alpha,
        gt_trimap,
        masks,
    })
}

/// Paths written by [`write_case`].
#[derive(Clone, Debug, Serialize)]
pub struct CaseFiles {
    pub volume: PathBuf,
    pub gt_alpha: PathBuf,
    pub gt_trimap: PathBuf,
    pub masks: Vec<PathBuf>,
}

pub fn write_case(case: &PhantomCase, outdir: impl AsRef<Path>) -> Result<CaseFiles> {
    let outdir = outdir.as_ref();
    std::fs::create_dir_all(outdir).map_err(|e| MatteError::io(outdir, e))?;
    let files = CaseFiles {
        volume: outdir.join("volume.json"),
        gt_alpha: outdir.join("gt_alpha.json"),
        gt_trimap: outdir.join("gt_trimap.json"),
        masks: (0..case.masks.len())
            .map(|i| outdir.join(format!("mask_{i}.json")))
            .collect(),
    };
    write_volume(&case.volume, &files.volume)?;
    write_matte(&case.gt_alpha, &files.gt_alpha)?;
    write_trimap(&case.gt_trimap, &files.gt_trimap)?;
    for (m, p) in case.masks.iter().zip(&files.masks) {
        write_mask(m, p)?;
    }
    Ok(files)
}
