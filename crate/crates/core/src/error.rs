use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point at or behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("non-positive depth {0}")]
    InvalidDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(&'static str),
    #[error("empty mesh")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index} out of range")]
    IndexOutOfRange { triangle: usize, index: u32 },
    #[error("view {0} renders empty; camera distance misconfigured")]
    EmptyView(usize),
    #[error("camera position coincides with the object centroid")]
    CameraAtCentroid,
    #[error("distance volume dims {0:?} exceed the 512^3 limit")]
    VolumeTooLarge([usize; 3]),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("depth map has no valid pixels")]
    NoValidDepth,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated data")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("frame count mismatch: {0} vs {1}")]
    FrameCountMismatch(usize, usize),
    #[error("linear system contains non-finite entries")]
    NonFinite,
    #[error("normal system could not be solved (residual {0:e})")]
    Singular(f64),
}
