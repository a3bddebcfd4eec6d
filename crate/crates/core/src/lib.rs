//! Parallel-beam tomography toolkit built around the virtual alignment
//! method (VAM): synthesize phantoms with known geometry, forward-project
//! them, inject per-projection rigid-motion errors, realign the projection
//! set via tracked fixed points and sinusoid trajectories, reconstruct with
//! filtered back-projection, and verify sub-pixel geometric consistency
//! between reconstructed volumes and projection sets.
//!
//! Everything is a pure function of immutable inputs; parallel sections
//! compute each output element in exactly one job with a fixed summation
//! order, so results are bitwise deterministic regardless of thread count.

pub mod align;
pub mod error;
mod fft;
mod linalg;
pub mod grid;
pub mod io;
pub mod metrology;
pub mod motion;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod tracker;

pub use align::{AlignMode, AlignmentReport, TrajectoryModel};
pub use error::{Error, Result};
pub use grid::{GridGeometry, Slice, Volume};
pub use motion::{MotionMode, MotionSchedule};
pub use phantom::PhantomSpec;
pub use projector::{ProjectionSet, RawFrameSet, Sinogram};
pub use recon::{FilterKind, FilterSpec};
pub use tracker::{FixedPointTrack, TrackMethod, TrackerParams};
