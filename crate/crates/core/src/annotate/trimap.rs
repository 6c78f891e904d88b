use std::path::Path;

use crate::error::{MatteError, Result};
use crate::io::{self, Payload};
use crate::volume::{check_same_dims, BinaryMask, Dims, Spacing, Unit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    Unknown,
    Foreground,
}

impl Label {
    /// Persisted byte code.
    pub const fn code(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Unknown => 128,
            Label::Foreground => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Background),
            128 => Some(Label::Unknown),
            255 => Some(Label::Foreground),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct LabelCounts {
    pub foreground: usize,
    pub background: usize,
    pub unknown: usize,
}

/// Three-way voxel partition into known foreground, known background and unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct Trimap {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<Label>,
}

impl Trimap {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(MatteError::Validation(format!(
                "trimap has {} labels for dims {dims}",
                labels.len()
            )));
        }
        spacing.validate()?;
        Ok(Trimap {
            dims,
            spacing,
            labels,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, label: Label) -> Result<Self> {
        Trimap::new(dims, spacing, vec![label; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for l in &self.labels {
            match l {
                Label::Foreground => c.foreground += 1,
                Label::Background => c.background += 1,
                Label::Unknown => c.unknown += 1,
            }
        }
        c
    }

    pub fn to_codes(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.code()).collect()
    }

    pub fn from_codes(dims: Dims, spacing: Spacing, codes: &[u8]) -> Result<Self> {
        let labels = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Label::from_code(c).ok_or_else(|| {
                    MatteError::Validation(format!(
                        "trimap code {c} at voxel {i}; expected 0, 128 or 255"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trimap::new(dims, spacing, labels)
    }
}

pub fn read_trimap(header_path: impl AsRef<Path>) -> Result<Trimap> {
    let (h, payload) = io::read_raw(header_path)?;
    match payload {
        Payload::U8(codes) => Trimap::from_codes(h.dims.into(), Spacing(h.spacing_mm), &codes),
        Payload::F32(_) => Err(MatteError::Format("trimaps must use dtype u8".into())),
    }
}

pub fn write_trimap(t: &Trimap, header_path: impl AsRef<Path>) -> Result<()> {
    io::write_raw(
        header_path,
        t.dims(),
        t.spacing(),
        Unit::Dimensionless,
        &Payload::U8(t.to_codes()),
    )
}

/// Foreground is the intersection of all masks, background the complement of
/// their union, and the disagreement band is grown by `dilation_radius`
/// 6-connected steps into both known regions.
pub fn trimap_from_masks(masks: &[BinaryMask], dilation_radius: usize) -> Result<Trimap> {
    let first = masks
        .first()
        .ok_or_else(|| MatteError::Argument("at least one mask is required".into()))?;
    let dims = first.dims();
    for m in &masks[1..] {
        check_same_dims(dims, m.dims(), "annotator masks")?;
    }

    let mut labels: Vec<Label> = (0..dims.len())
        .map(|i| {
            let votes = masks.iter().filter(|m| m.data()[i]).count();
            if votes == masks.len() {
                Label::Foreground
            } else if votes == 0 {
                Label::Background
            } else {
                Label::Unknown
            }
        })
        .collect();

    dilate_unknown(&mut labels, dims, dilation_radius);
    Trimap::new(dims, first.spacing(), labels)
}

/// Grows the unknown region by `radius` iterations of a 6-connected
/// structuring element.
fn dilate_unknown(labels: &mut [Label], dims: Dims, radius: usize) {
    let mut frontier: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == Label::Unknown)
        .map(|(i, _)| i)
        .collect();
    for _ in 0..radius {
        if frontier.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for &i in &frontier {
            dims.for_each_neighbor6(i, |j| {
                if labels[j] != Label::Unknown {
                    labels[j] = Label::Unknown;
                    next.push(j);
                }
            });
        }
        frontier = next;
    }
}
