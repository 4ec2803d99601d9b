//! Rigid-body math, the pinhole camera and triangle meshes.
//!
//! Lengths are meters everywhere. Twists are ordered `(v_x, v_y, v_z, w_x,
//! w_y, w_z)` and act on camera-frame points by left multiplication:
//! `pose' = exp(xi) * pose`.

use alloc::vec::Vec;
use nalgebra::{Matrix2x3, Matrix3, Matrix3x6, Vector2, Vector3, Vector6};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle the exponential map switches to its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Minimum camera-frame depth accepted by [`PinholeCamera::project`].
pub const MIN_DEPTH: f64 = 1e-6;

/// `[v]_x`, the cross-product matrix.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation about `axis` (unit) by `angle` radians.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = skew(axis);
    Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

pub fn rot_x(a: f64) -> Mat3 {
    axis_angle(&Vec3::x(), a)
}

pub fn rot_y(a: f64) -> Mat3 {
    axis_angle(&Vec3::y(), a)
}

pub fn rot_z(a: f64) -> Mat3 {
    axis_angle(&Vec3::z(), a)
}

/// Angle of a rotation matrix, in radians, in `[0, pi]`.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// Decomposes `r = R_x(a) * R_y(b) * R_z(c)` and returns `(a, b, c)`.
pub fn euler_xyz(r: &Mat3) -> (f64, f64, f64) {
    // r[(0,2)] = sin(b)
    let b = r[(0, 2)].clamp(-1.0, 1.0).asin();
    let cb = b.cos();
    if cb.abs() > 1e-12 {
        let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
        let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
        (a, b, c)
    } else {
        // gimbal lock: fold everything into a
        let a = r[(2, 1)].atan2(r[(1, 1)]);
        (a, b, 0.0)
    }
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return *m,
    };
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Minimal 6-vector parameterization of a rigid-body increment.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    /// Translational velocity, meters.
    pub v: Vec3,
    /// Rotational velocity, radians.
    pub w: Vec3,
}

impl Twist {
    pub fn new(v: Vec3, w: Vec3) -> Self {
        Self { v, w }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            v: Vec3::new(x[0], x[1], x[2]),
            w: Vec3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// The SE(3) exponential `exp(xi^)`.
    pub fn exp(&self) -> RigidPose {
        let theta2 = self.w.norm_squared();
        let theta = theta2.sqrt();
        let k = skew(&self.w);
        let k2 = k * k;
        let (a, b, c) = if theta < SMALL_ANGLE {
            (
                1.0 - theta2 / 6.0,
                0.5 - theta2 / 24.0,
                1.0 / 6.0 - theta2 / 120.0,
            )
        } else {
            let (s, co) = (theta.sin(), theta.cos());
            (s / theta, (1.0 - co) / theta2, (theta - s) / (theta2 * theta))
        };
        let rotation = Mat3::identity() + k * a + k2 * b;
        let v = Mat3::identity() + k * b + k2 * c;
        RigidPose {
            rotation,
            translation: v * self.v,
        }
    }
}

impl core::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist {
            v: -self.v,
            w: -self.w,
        }
    }
}

/// Rigid transform from the object-local frame into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Camera center expressed in the object frame, `-R^T t`.
    pub fn camera_in_object(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Left-multiplicative update `exp(xi) * self`.
    pub fn left_update(&self, xi: &Twist) -> RigidPose {
        xi.exp().compose(self)
    }

    pub fn orthonormalized(&self) -> RigidPose {
        RigidPose {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    /// Row-major `[R | t]`, 12 values.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> RigidPose {
        RigidPose {
            rotation: Mat3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vec3::new(v[3], v[7], v[11]),
        }
    }

    /// Largest deviation of `R^T R` from identity, plus `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
    }
}

/// `d exp(xi) X / d xi` at `xi = 0`: `[I | -[X]_x]`.
pub fn jac_twist_action(x: &Vec3) -> Matrix3x6<f64> {
    #[rustfmt::skip]
    let j = Matrix3x6::new(
        1.0, 0.0, 0.0, 0.0,  x.z, -x.y,
        0.0, 1.0, 0.0, -x.z, 0.0,  x.x,
        0.0, 0.0, 1.0,  x.y, -x.x, 0.0,
    );
    j
}

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("empty image"));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::InvalidCamera("principal point outside the image"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// 640x480 with the principal point at the image center.
    pub fn vga(f: f64) -> Self {
        Self {
            fx: f,
            fy: f,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    pub fn project(&self, x: &Vec3) -> Result<Vec2> {
        if !(x.z > MIN_DEPTH) {
            return Err(Error::BehindCamera(x.z));
        }
        Ok(self.project_unchecked(x))
    }

    #[inline]
    pub fn project_unchecked(&self, x: &Vec3) -> Vec2 {
        let iz = 1.0 / x.z;
        Vec2::new(self.fx * x.x * iz + self.cx, self.fy * x.y * iz + self.cy)
    }

    pub fn backproject(&self, px: &Vec2, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        Ok(self.backproject_unchecked(px.x, px.y, depth))
    }

    #[inline]
    pub fn backproject_unchecked(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// `d project(X) / dX`.
    pub fn jac_projection(&self, x: &Vec3) -> Result<Matrix2x3<f64>> {
        if !(x.z > MIN_DEPTH) {
            return Err(Error::BehindCamera(x.z));
        }
        Ok(self.jac_projection_unchecked(x))
    }

    #[inline]
    pub fn jac_projection_unchecked(&self, x: &Vec3) -> Matrix2x3<f64> {
        let iz = 1.0 / x.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * x.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * x.y * iz2,
        )
    }

    /// Intrinsics of the image downsampled `2^level` times by 2x2 box filtering.
    pub fn downsampled(&self, level: usize) -> PinholeCamera {
        let mut c = *self;
        for _ in 0..level {
            c = PinholeCamera {
                fx: c.fx * 0.5,
                fy: c.fy * 0.5,
                cx: ((c.cx - 0.5) * 0.5).max(0.0),
                cy: ((c.cy - 0.5) * 0.5).max(0.0),
                width: (c.width / 2).max(1),
                height: (c.height / 2).max(1),
            };
        }
        c
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

/// Triangle soup in the object-local frame, recentred on its vertex centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
}

/// Triangles with less area than this are dropped on construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

impl TriangleMesh {
    /// Validates indices, drops degenerate faces, recentres and computes
    /// face normals from the counter-clockwise winding.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mut mesh = Self::new_uncentered(vertices, triangles)?;
        let centroid =
            mesh.vertices.iter().fold(Vec3::zeros(), |a, v| a + v) / mesh.vertices.len() as f64;
        for v in &mut mesh.vertices {
            *v -= centroid;
        }
        Ok(mesh)
    }

    /// Like [`TriangleMesh::new`] but keeps the vertex coordinates as given.
    pub fn new_uncentered(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        for (i, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx as usize >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        triangle: i,
                        index: idx,
                    });
                }
            }
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        let mut dropped = 0usize;
        for tri in triangles {
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            let area = 0.5 * n.norm();
            if area < MIN_TRIANGLE_AREA {
                dropped += 1;
                continue;
            }
            normals.push(n / (2.0 * area));
            kept.push(tri);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(Self {
            vertices,
            triangles: kept,
            normals,
        })
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// The eight corners of the axis-aligned bounding box.
    pub fn bounding_box_corners(&self) -> [Vec3; 8] {
        let (lo, hi) = self.bounding_box();
        core::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }

    /// Maximum pairwise vertex distance.
    pub fn diameter(&self) -> Result<f64> {
        mesh_diameter(&self.vertices)
    }

    /// Concatenates meshes, keeping coordinates, then recentres the result.
    pub fn merged(parts: &[TriangleMesh]) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Copy with every vertex transformed; normals follow the rotation.
    pub fn transformed(&self, pose: &RigidPose) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.iter().map(|n| pose.rotate(n)).collect(),
        }
    }

    /// Axis-aligned box with the given edge lengths, centred on the origin.
    pub fn cuboid(sx: f64, sy: f64, sz: f64) -> TriangleMesh {
        let h = Vec3::new(sx, sy, sz) * 0.5;
        let vertices: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
            })
            .collect();
        let triangles = alloc::vec![
            [0, 2, 3], [0, 3, 1], // -z
            [4, 5, 7], [4, 7, 6], // +z
            [0, 1, 5], [0, 5, 4], // -y
            [2, 6, 7], [2, 7, 3], // +y
            [0, 4, 6], [0, 6, 2], // -x
            [1, 3, 7], [1, 7, 5], // +x
        ];
        TriangleMesh::new(vertices, triangles).expect("cuboid is well formed")
    }

    /// Geodesic sphere from a subdivided icosahedron.
    pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
        let (vertices, triangles) = icosphere_raw(subdivisions);
        let vertices = vertices.into_iter().map(|v| v * radius).collect();
        TriangleMesh::new(vertices, triangles).expect("icosphere is well formed")
    }

    /// Closed cylinder along the z axis.
    pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
        let n = segments.max(3);
        let h = height * 0.5;
        let mut vertices = Vec::with_capacity(2 * n + 2);
        for i in 0..n {
            let a = core::f64::consts::TAU * i as f64 / n as f64;
            let (s, c) = a.sin_cos();
            vertices.push(Vec3::new(radius * c, radius * s, -h));
            vertices.push(Vec3::new(radius * c, radius * s, h));
        }
        let bottom = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, 0.0, -h));
        let top = bottom + 1;
        vertices.push(Vec3::new(0.0, 0.0, h));
        let mut triangles = Vec::with_capacity(4 * n);
        for i in 0..n as u32 {
            let j = (i + 1) % n as u32;
            let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            triangles.push([b0, b1, t1]);
            triangles.push([b0, t1, t0]);
            triangles.push([bottom, b1, b0]);
            triangles.push([top, t0, t1]);
        }
        TriangleMesh::new(vertices, triangles).expect("cylinder is well formed")
    }
}

/// Unit icosphere vertices and triangles; `3` subdivisions give 642 vertices.
pub fn icosphere_raw(subdivisions: usize) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let t = (1.0 + 5.0f64.sqrt()) * 0.5;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = alloc::vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = alloc::collections::BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Maximum pairwise distance of a point set.
///
/// Exact. Points are visited in order of decreasing distance from their mean
/// so that pairs with `r_i + r_j` below the best distance found are skipped.
pub fn mesh_diameter(points: &[Vec3]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let c = points.iter().fold(Vec3::zeros(), |a, v| a + v) / points.len() as f64;
    let mut order: Vec<(f64, usize)> =
        points.iter().enumerate().map(|(i, p)| ((p - c).norm(), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best2 = 0.0f64;
    for (i, &(ri, pi)) in order.iter().enumerate() {
        // the pruning bound is conservative by a hair to absorb rounding
        if 2.0 * ri * (1.0 + 1e-12) < best2.sqrt() {
            break;
        }
        for &(rj, pj) in &order[i + 1..] {
            if (ri + rj) * (1.0 + 1e-12) < best2.sqrt() {
                break;
            }
            let d2 = (points[pi] - points[pj]).norm_squared();
            if d2 > best2 {
                best2 = d2;
            }
        }
    }
    Ok(best2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::{FRAC_PI_2, PI};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn rand_vec(r: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(
            r.random_range(-s..s),
            r.random_range(-s..s),
            r.random_range(-s..s),
        )
    }

    /// Rodrigues' formula written out component-wise.
    fn rodrigues_oracle(w: &Vec3) -> Mat3 {
        let th = w.norm();
        let k = w / th;
        let (s, c) = (th.sin(), th.cos());
        let t = 1.0 - c;
        Mat3::new(
            c + k.x * k.x * t,
            k.x * k.y * t - k.z * s,
            k.x * k.z * t + k.y * s,
            k.y * k.x * t + k.z * s,
            c + k.y * k.y * t,
            k.y * k.z * t - k.x * s,
            k.z * k.x * t - k.y * s,
            k.z * k.y * t + k.x * s,
            c + k.z * k.z * t,
        )
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(Twist::zero().exp(), RigidPose::identity());
    }

    #[test]
    fn exp_pure_translation() {
        let p = Twist::new(Vec3::new(0.1, 0.0, 0.0), Vec3::zeros()).exp();
        assert_eq!(p.rotation, Mat3::identity());
        assert_relative_eq!(p.translation, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z_matches_rodrigues() {
        let w = Vec3::new(0.0, 0.0, FRAC_PI_2);
        let p = Twist::new(Vec3::zeros(), w).exp();
        assert_relative_eq!(p.rotation, rodrigues_oracle(&w), epsilon = 1e-12);
        assert_relative_eq!(p.transform_point(&Vec3::x()), Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn exp_rotation_matches_rodrigues_randomized() {
        let mut r = rng();
        for _ in 0..200 {
            let w = rand_vec(&mut r, 2.0);
            let p = Twist::new(rand_vec(&mut r, 1.0), w).exp();
            assert_relative_eq!(p.rotation, rodrigues_oracle(&w), epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_small_angle_branch_is_accurate() {
        let v = Vec3::new(0.3, -0.2, 0.1);
        for w in [Vec3::new(0.0, 0.0, 0.9e-8), Vec3::new(3e-9, -4e-9, 5e-9)] {
            let p = Twist::new(v, w).exp();
            assert_relative_eq!(p.rotation, rodrigues_oracle(&w), epsilon = 1e-15);
            // V = I + [w]/2 + O(|w|^2)
            assert_relative_eq!(p.translation, v + w.cross(&v) * 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn exp_inverse_twist_composes_to_identity() {
        let mut r = rng();
        for _ in 0..500 {
            let mut x = Vector6::from_fn(|_, _| r.random_range(-1.0..1.0));
            if x.norm() > 1.0 {
                x /= x.norm();
            }
            let xi = Twist::from_vector(&x);
            let id = xi.exp().compose(&(-xi).exp());
            assert!((id.rotation - Mat3::identity()).abs().max() < 1e-9);
            assert!(id.translation.norm() < 1e-9);
        }
    }

    #[test]
    fn pose_inverse_and_associativity() {
        let mut r = rng();
        let rand_pose = |r: &mut ChaCha8Rng| {
            Twist::new(rand_vec(r, 1.0), rand_vec(r, 3.0)).exp()
        };
        for _ in 0..100 {
            let (a, b, c) = (rand_pose(&mut r), rand_pose(&mut r), rand_pose(&mut r));
            let id = a.compose(&a.inverse());
            assert!((id.rotation - Mat3::identity()).abs().max() < 1e-9);
            assert!(id.translation.norm() < 1e-9);
            let l = a.compose(&b).compose(&c);
            let rr = a.compose(&b.compose(&c));
            assert_relative_eq!(l.rotation, rr.rotation, epsilon = 1e-12);
            assert_relative_eq!(l.translation, rr.translation, epsilon = 1e-12);
            assert!(a.orthonormality_error() < 1e-9);
        }
    }

    #[test]
    fn repeated_updates_stay_orthonormal_with_periodic_projection() {
        let mut r = rng();
        let mut pose = RigidPose::identity();
        for i in 1..=10_000 {
            let xi = Twist::new(rand_vec(&mut r, 0.01), rand_vec(&mut r, 0.05));
            pose = pose.left_update(&xi);
            if i % 100 == 0 {
                pose = pose.orthonormalized();
            }
        }
        assert!(pose.orthonormality_error() < 1e-6);
    }

    #[test]
    fn project_examples() {
        let cam = PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        assert_eq!(cam.project(&Vec3::new(0.0, 0.0, 1.0)).unwrap(), Vec2::new(320.0, 240.0));
        assert_relative_eq!(
            cam.project(&Vec3::new(0.1, 0.0, 1.0)).unwrap(),
            Vec2::new(370.0, 240.0),
            epsilon = 1e-12
        );
        assert!(matches!(cam.project(&Vec3::new(0.1, 0.0, 0.0)), Err(Error::BehindCamera(_))));
        assert!(cam.project(&Vec3::new(0.1, 0.0, -1.0)).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(PinholeCamera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn backproject_examples_and_round_trip() {
        let cam = PinholeCamera::new(525.0, 520.0, 319.5, 239.5, 640, 480).unwrap();
        let p = cam.backproject(&Vec2::new(cam.cx, cam.cy), 1.0).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            cam.backproject(&Vec2::new(1.0, 1.0), 0.0),
            Err(Error::InvalidDepth(_))
        ));
        let mut r = rng();
        for _ in 0..1000 {
            let x = Vec2::new(r.random_range(0.0..640.0), r.random_range(0.0..480.0));
            let d = r.random_range(0.1..10.0);
            let p = cam.backproject(&x, d).unwrap();
            assert_eq!(p.z, d);
            let back = cam.project(&p).unwrap();
            assert!((back - x).norm() < 1e-9);
        }
    }

    #[test]
    fn projection_jacobian_matches_central_differences() {
        let cam = PinholeCamera::vga(500.0);
        let mut r = rng();
        let h = 1e-6;
        for _ in 0..100 {
            let x = Vec3::new(
                r.random_range(-0.5..0.5),
                r.random_range(-0.5..0.5),
                r.random_range(0.3..3.0),
            );
            let j = cam.jac_projection(&x).unwrap();
            for k in 0..3 {
                let mut dx = Vec3::zeros();
                dx[k] = h;
                let fd = (cam.project_unchecked(&(x + dx)) - cam.project_unchecked(&(x - dx)))
                    / (2.0 * h);
                for row in 0..2 {
                    let a = j[(row, k)];
                    let err = (a - fd[row]).abs() / a.abs().max(fd[row].abs()).max(1e-8);
                    assert!(err < 1e-4 || (a - fd[row]).abs() < 1e-6, "{a} vs {}", fd[row]);
                }
            }
        }
        // the depth column carries a minus sign
        let j = cam.jac_projection(&Vec3::new(0.1, 0.2, 1.0)).unwrap();
        assert!(j[(0, 2)] < 0.0 && j[(1, 2)] < 0.0);
    }

    #[test]
    fn projection_jacobian_symmetry_and_homogeneity() {
        let cam = PinholeCamera::vga(500.0);
        let j = cam.jac_projection(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(j[(1, 0)], 0.0);
        assert_eq!(j[(0, 2)], 0.0);
        assert_eq!(j[(1, 2)], 0.0);
        let x = Vec3::new(0.3, -0.1, 1.5);
        let j1 = cam.jac_projection(&x).unwrap();
        let j2 = cam.jac_projection(&(x * 2.0)).unwrap();
        assert_relative_eq!(j2, j1 * 0.5, epsilon = 1e-12);
        assert!(cam.jac_projection(&Vec3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn twist_action_jacobian() {
        let j0 = jac_twist_action(&Vec3::zeros());
        let mut expected = Matrix3x6::zeros();
        expected.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
        assert_eq!(j0, expected);

        let x = Vec3::new(1.0, 2.0, 3.0);
        let j = jac_twist_action(&x);
        assert_eq!(j[(0, 4)], x.z);
        assert_eq!(j[(0, 5)], -x.y);

        let mut r = rng();
        let h = 1e-6;
        for _ in 0..100 {
            let x = rand_vec(&mut r, 2.0);
            let j = jac_twist_action(&x);
            for k in 0..6 {
                let mut e = Vector6::zeros();
                e[k] = h;
                let plus = Twist::from_vector(&e).exp().transform_point(&x);
                let minus = Twist::from_vector(&-e).exp().transform_point(&x);
                let fd = (plus - minus) / (2.0 * h);
                for row in 0..3 {
                    let a = j[(row, k)];
                    let err = (a - fd[row]).abs() / a.abs().max(1e-3);
                    assert!(err < 1e-5, "col {k} row {row}: {a} vs {}", fd[row]);
                }
            }
        }
    }

    #[test]
    fn euler_round_trip() {
        let (a, b, c) = (0.3, -0.4, 1.2);
        let r = rot_x(a) * rot_y(b) * rot_z(c);
        let (a2, b2, c2) = euler_xyz(&r);
        assert_relative_eq!(a, a2, epsilon = 1e-12);
        assert_relative_eq!(b, b2, epsilon = 1e-12);
        assert_relative_eq!(c, c2, epsilon = 1e-12);
        assert_relative_eq!(rotation_angle(&rot_z(PI / 3.0)), PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mesh_construction() {
        let cube = TriangleMesh::cuboid(1.0, 1.0, 1.0);
        assert_eq!(cube.vertices.len(), 8);
        assert_eq!(cube.triangles.len(), 12);
        assert_relative_eq!(cube.diameter().unwrap(), 3.0f64.sqrt(), epsilon = 1e-12);
        for (i, n) in cube.normals.iter().enumerate() {
            assert!((n.norm() - 1.0).abs() < 1e-6);
            let [a, b, c] = cube.triangle(i);
            assert!(n.dot(&((a + b + c) / 3.0)) > 0.0, "cube normals point outward");
        }
        let s = TriangleMesh::icosphere(1.0, 2);
        for (i, n) in s.normals.iter().enumerate() {
            assert!(n.dot(&s.triangle(i)[0]) > 0.0);
        }
        let cyl = TriangleMesh::cylinder(0.1, 0.3, 24);
        for (i, n) in cyl.normals.iter().enumerate() {
            let [a, b, c] = cyl.triangle(i);
            assert!(n.dot(&((a + b + c) / 3.0)) > 0.0);
        }
    }

    #[test]
    fn mesh_rejects_bad_input_and_drops_degenerates() {
        assert_eq!(TriangleMesh::new(Vec::new(), Vec::new()), Err(Error::EmptyMesh));
        let v = alloc::vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            TriangleMesh::new(v.clone(), alloc::vec![[0, 1, 3]]),
            Err(Error::IndexOutOfRange { .. })
        ));
        let m = TriangleMesh::new(v, alloc::vec![[0, 1, 2], [0, 1, 1]]).unwrap();
        assert_eq!(m.triangles.len(), 1);
        let c = m.vertices.iter().fold(Vec3::zeros(), |a, v| a + v);
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn diameter_examples() {
        let pts = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert_eq!(mesh_diameter(&pts).unwrap(), 2.0);
        assert_eq!(mesh_diameter(&[]), Err(Error::EmptyMesh));

        let mut r = rng();
        let pts: Vec<Vec3> = (0..500).map(|_| rand_vec(&mut r, 1.0)).collect();
        let mut brute = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                brute = brute.max((pts[i] - pts[j]).norm());
            }
        }
        assert_eq!(mesh_diameter(&pts).unwrap(), brute);
    }
}
