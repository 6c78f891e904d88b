//! Volumetric alpha matting for lesion-like structures in CT.
//!
//! The pipeline turns several annotators' binary masks into a trimap,
//! derives per-voxel constraints (optionally calibrated to Hounsfield
//! units), assembles a sparse affinity Laplacian over the volume and solves
//! `(L + λD) α = λ D S` with preconditioned conjugate gradients.
//!
//! ```no_run
//! use volmatte::{annotate, phantom, solver};
//!
//! let case = phantom::generate(&phantom::PhantomSpec::sphere(32, 5.0, 10.0)).unwrap();
//! let (alpha, report) = solver::cf3d(
//!     &case.volume,
//!     &case.gt_trimap,
//!     &Default::default(),
//!     &Default::default(),
//! )
//! .unwrap();
//! println!("{} iterations, residual {:e}", report.iterations, report.final_relative_residual);
//! # let _ = (alpha, annotate::Label::Unknown);
//! ```

pub mod annotate;
pub mod cli;
pub mod error;
pub mod io;
pub mod laplacian;
pub mod metrics;
pub mod phantom;
pub mod solver;
pub mod volume;

pub use error::{MatteError, Result};
pub use volume::{linear_index, AlphaMatte, BinaryMask, Dims, HuWindow, Spacing, Unit, Volume3, VoxelIndex};
