//! File formats, caches, synthetic sequence output and the evaluation
//! harness around `regiontrack-core`.

pub mod cache;
pub mod clock;
pub mod config;
pub mod error;
pub mod mesh_io;
pub mod overlay;
pub mod sequence;
pub mod shapes;
pub mod study;
pub mod track;

pub use clock::StdClock;
pub use error::{Error, Result};
