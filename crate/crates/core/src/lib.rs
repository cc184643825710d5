//! Scribble-driven object selection in plane-structured voxel volumes.
//!
//! The crate takes a voxel volume aligned with a reference camera (one
//! transparency value plus color-basis coefficients per voxel), a handful of
//! calibrated multi-view images, and foreground/background scribbles drawn on
//! the reference view. It then
//!
//! 1. builds a per-voxel embedding from a plane-sweep variance cost volume,
//!    the stored voxel appearance, and a positional encoding ([`features`]),
//! 2. lifts the scribbles into the volume through accumulated transmittance
//!    and trains a small MLP on the lifted voxels ([`scribbles`], [`classifier`]),
//! 3. cleans the per-voxel prediction with an exact s-t min-cut on a
//!    downsampled grid ([`graphcut`]),
//! 4. renders the selection into any view ([`volume`]) and scores it
//!    ([`eval`]).
//!
//! [`synth`] generates procedural scenes with exact ground truth and
//! [`pipeline`] wires everything together for the CLI and the HTTP service.

pub mod classifier;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod graphcut;
pub mod grid;
pub mod kdtree;
pub mod pipeline;
pub mod raster;
pub mod scribbles;
pub mod synth;
pub mod volume;

pub use geometry::{Camera, DepthPlaneSet, SpacingKind};
pub use grid::{Dims3, Field3};
pub use volume::PlaneVolume;

/// Default accumulated-transmittance threshold used for scribble lifting.
pub const DEFAULT_GAMMA: f64 = 0.01;
