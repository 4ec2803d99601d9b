//! Sparse region-based 6-DoF object tracking in color and depth.
//!
//! This crate holds everything that is pure computation: rigid-body math,
//! a software rasterizer, the precomputed view-template database, the
//! model distance volume, color/cloud segmentation posteriors and the joint
//! contour + plane-to-point Gauss-Newton tracker. It needs only `alloc`;
//! file formats, clocks and the command line live in the `regiontrack`
//! companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod raster;
pub mod segmentation;
pub mod synth;
pub mod tracker;
pub mod viewspace;
pub mod volume;

mod codec;

pub use error::{Error, Result};
pub use geometry::{PinholeCamera, RigidPose, TriangleMesh, Twist};
pub use raster::{render, RenderTarget};
pub use viewspace::{TemplateSet, ViewTemplate};
pub use segmentation::{ColorHistogram, Frame};
pub use tracker::{NormalSystem, Tracker, TrackerConfig};
pub use volume::{DistanceVolume, WeightKernel};

/// Monotonic time source used for per-phase tracking diagnostics.
///
/// The core has no clock of its own; callers that want timings pass one in.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin.
    fn now(&self) -> f64;
}

/// Clock that always reads zero. Timing columns come out as zeros.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}
