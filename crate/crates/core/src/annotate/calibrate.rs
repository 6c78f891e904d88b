//! Constraint vectors for the matting solve, optionally calibrated to HU.

use serde::{Deserialize, Serialize};

use super::trimap::{Label, Trimap};
use crate::error::{MatteError, Result};
use crate::volume::{check_same_dims, Unit, Volume3};

/// Mapping applied to foreground voxels brighter than `l_high`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PMode {
    #[default]
    ConstantOne,
    /// Falls linearly from 1 at `l_high` to 0 one window width above it.
    LinearDecreasing,
}

/// Mapping applied to foreground voxels darker than `l_low`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QMode {
    /// Rises linearly from 0 at `window_low` to 1 at `l_low`.
    #[default]
    LinearIncreasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub window_low: f64,
    pub window_high: f64,
    /// Lower bound of the pure-lesion HU range; defaults to `window_high`.
    pub l_low: f64,
    pub l_high: f64,
    pub p_mode: PMode,
    pub q_mode: QMode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            window_low: -1000.0,
            window_high: 400.0,
            l_low: 400.0,
            l_high: 3071.0,
            p_mode: PMode::ConstantOne,
            q_mode: QMode::LinearIncreasing,
        }
    }
}

impl CalibrationConfig {
    /// Window `[window_low, window_high]` with `l_low` pinned to the upper edge.
    pub fn for_window(window_low: f64, window_high: f64) -> Self {
        CalibrationConfig {
            window_low,
            window_high,
            l_low: window_high,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.window_low, self.window_high, self.l_low, self.l_high]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(MatteError::Argument("calibration bounds must be finite".into()));
        }
        if self.window_low >= self.window_high {
            return Err(MatteError::Argument(format!(
                "calibration window requires window_low < window_high, got [{}, {}]",
                self.window_low, self.window_high
            )));
        }
        if self.l_low > self.l_high {
            return Err(MatteError::Argument(format!(
                "calibration requires l_low <= l_high, got {} > {}",
                self.l_low, self.l_high
            )));
        }
        match self.q_mode {
            QMode::LinearIncreasing if self.l_low <= self.window_low => {
                Err(MatteError::Argument(format!(
                    "degenerate slope: l_low ({}) must exceed window_low ({}) for a linearly increasing q",
                    self.l_low, self.window_low
                )))
            }
            _ => Ok(()),
        }
    }

    fn q(&self, hu: f64) -> f64 {
        match self.q_mode {
            QMode::LinearIncreasing => {
                ((hu - self.window_low) / (self.l_low - self.window_low)).clamp(0.0, 1.0)
            }
        }
    }

    fn p(&self, hu: f64) -> f64 {
        match self.p_mode {
            PMode::ConstantOne => 1.0,
            PMode::LinearDecreasing => {
                let width = self.window_high - self.window_low;
                (1.0 - (hu - self.l_high) / width).clamp(0.0, 1.0)
            }
        }
    }

    /// Calibrated opacity of a foreground voxel with intensity `hu`.
    pub fn foreground_alpha(&self, hu: f64) -> f64 {
        if hu < self.l_low {
            self.q(hu)
        } else if hu > self.l_high {
            self.p(hu)
        } else {
            1.0
        }
    }
}

/// Prior values `s`, constraint indicator `d` (the diagonal of D) and weight `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub s: Vec<f64>,
    pub d: Vec<bool>,
    pub lambda: f64,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn constrained_count(&self) -> usize {
        self.d.iter().filter(|&&d| d).count()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(MatteError::Argument(format!(
            "constraint weight lambda must be positive, got {lambda}"
        )))
    }
}

/// Binary constraints straight from the trimap: 1 on foreground, 0 on background.
pub fn binarize_constraints(t: &Trimap, lambda: f64) -> Result<ConstraintSet> {
    check_lambda(lambda)?;
    let (s, d) = t
        .labels()
        .iter()
        .map(|l| match l {
            Label::Foreground => (1.0, true),
            Label::Background => (0.0, true),
            Label::Unknown => (0.0, false),
        })
        .unzip();
    Ok(ConstraintSet { s, d, lambda })
}

/// Constraints whose foreground values follow the HU calibration of `cfg`.
pub fn calibrate_foreground(
    v: &Volume3,
    t: &Trimap,
    cfg: &CalibrationConfig,
    lambda: f64,
) -> Result<ConstraintSet> {
    check_lambda(lambda)?;
    cfg.validate()?;
    check_same_dims(v.dims(), t.dims(), "volume and trimap")?;
    if v.unit() != Unit::Hu {
        return Err(MatteError::Validation(format!(
            "foreground calibration needs a volume in HU, got {:?}",
            v.unit()
        )));
    }
    let (s, d) = t
        .labels()
        .iter()
        .zip(v.data())
        .map(|(l, &hu)| match l {
            Label::Foreground => (cfg.foreground_alpha(hu), true),
            Label::Background => (0.0, true),
            Label::Unknown => (0.0, false),
        })
        .unzip();
    Ok(ConstraintSet { s, d, lambda })
}
