//! Built-in procedural models for synthetic sequences.

use regiontrack_core::geometry::{rot_x, Vec3};
use regiontrack_core::{RigidPose, TriangleMesh};

use crate::error::{Error, Result};

pub const NAMES: [&str; 5] = ["box", "flatbox", "cylinder", "sphere", "rich"];

pub fn builtin(name: &str) -> Result<TriangleMesh> {
    Ok(match name {
        "box" => TriangleMesh::cuboid(0.1, 0.1, 0.1),
        "flatbox" => TriangleMesh::cuboid(0.16, 0.12, 0.02),
        "cylinder" => TriangleMesh::cylinder(0.04, 0.12, 32),
        "sphere" => TriangleMesh::icosphere(0.05, 3),
        // a box with a handle sticking out sideways
        "rich" => {
            let body = TriangleMesh::cuboid(0.1, 0.06, 0.05);
            let handle = TriangleMesh::cylinder(0.018, 0.07, 24)
                .transformed(&RigidPose::new(rot_x(1.2), Vec3::new(0.04, 0.045, 0.0)));
            TriangleMesh::merged(&[body, handle])?
        }
        _ => {
            return Err(Error::Invalid(format!(
                "unknown shape {name:?} (expected one of {})",
                NAMES.join(", ")
            )))
        }
    })
}
