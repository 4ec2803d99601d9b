//! Trajectory error metrics.
//!
//! Rotational errors are the x-y-z Euler angles of `R_est * R_gt^T`, so each
//! axis error is measured about the corresponding camera axis.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{euler_xyz, RigidPose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub frames: usize,
    /// Per-axis translational RMSE, millimeters.
    pub t_rmse_mm: [f64; 3],
    /// Per-axis rotational RMSE, degrees.
    pub r_rmse_deg: [f64; 3],
    /// Fraction of frames passing the mean-vertex-distance test.
    pub linemod_score: f64,
}

/// Per-axis translation (m) and rotation (rad) errors of one estimate.
pub fn pose_error(est: &RigidPose, gt: &RigidPose) -> ([f64; 3], [f64; 3]) {
    let dt = est.translation - gt.translation;
    let (a, b, c) = euler_xyz(&(est.rotation * gt.rotation.transpose()));
    ([dt.x, dt.y, dt.z], [a, b, c])
}

/// Mean distance between model points under the two poses.
pub fn mean_vertex_distance(est: &RigidPose, gt: &RigidPose, points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let sum: f64 = points
        .iter()
        .map(|p| (est.transform_point(p) - gt.transform_point(p)).norm())
        .sum();
    sum / points.len() as f64
}

/// Whether the estimate is within a tenth of the model diameter.
pub fn linemod_pass(est: &RigidPose, gt: &RigidPose, points: &[Vec3], diameter: f64) -> bool {
    mean_vertex_distance(est, gt, points) < diameter / 10.0
}

pub fn linemod_score(est: &[RigidPose], gt: &[RigidPose], points: &[Vec3], diameter: f64) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(Error::FrameCountMismatch(est.len(), gt.len()));
    }
    if est.is_empty() {
        return Ok(1.0);
    }
    let pass = est
        .iter()
        .zip(gt)
        .filter(|(e, g)| linemod_pass(e, g, points, diameter))
        .count();
    Ok(pass as f64 / est.len() as f64)
}

pub fn evaluate(est: &[RigidPose], gt: &[RigidPose], points: &[Vec3], diameter: f64) -> Result<MetricsReport> {
    if est.len() != gt.len() {
        return Err(Error::FrameCountMismatch(est.len(), gt.len()));
    }
    let mut t = [0.0; 3];
    let mut r = [0.0; 3];
    for (e, g) in est.iter().zip(gt) {
        let (dt, dr) = pose_error(e, g);
        for a in 0..3 {
            t[a] += dt[a] * dt[a];
            r[a] += dr[a] * dr[a];
        }
    }
    let n = est.len().max(1) as f64;
    Ok(MetricsReport {
        frames: est.len(),
        t_rmse_mm: t.map(|s| (s / n).sqrt() * 1e3),
        r_rmse_deg: r.map(|s| (s / n).sqrt().to_degrees()),
        linemod_score: linemod_score(est, gt, points, diameter)?,
    })
}

/// Mean over frames of the rotation angle between estimate and truth, degrees.
pub fn mean_rotation_error_deg(est: &[RigidPose], gt: &[RigidPose]) -> f64 {
    let errs: Vec<f64> = est
        .iter()
        .zip(gt)
        .map(|(e, g)| crate::geometry::rotation_angle(&(e.rotation * g.rotation.transpose())).to_degrees())
        .collect();
    if errs.is_empty() {
        0.0
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    }
}
