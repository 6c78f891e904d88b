//! Trimaps from annotator masks, HU-calibrated constraints and preprocessing.

mod calibrate;
mod resample;
mod trimap;

pub use calibrate::{
    binarize_constraints, calibrate_foreground, CalibrationConfig, ConstraintSet, PMode, QMode,
};
pub use resample::{crop_and_resample, crop_and_resample_mask, lesion_z_span, CropSpec};
pub use trimap::{read_trimap, trimap_from_masks, write_trimap, Label, LabelCounts, Trimap};
