//! Z-buffered software rasterization of silhouettes and depth.
//!
//! Pixel centers are at integer coordinates. Coverage uses edge functions
//! with a top-left style tie rule so that two triangles sharing an edge
//! never both claim (or both miss) a pixel centred exactly on it. Depth is
//! interpolated perspective-correctly through `1/z`. Back faces are drawn.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{PinholeCamera, RigidPose, TriangleMesh, Vec3};

/// Near clipping plane, meters.
pub const NEAR: f64 = 1e-6;

/// Marks uncovered pixels in [`RenderTarget::triangle`].
pub const NO_TRIANGLE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderTarget {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    /// Camera-frame z of the nearest surface, `+inf` where empty.
    pub depth: Vec<f64>,
    /// Index of the triangle that produced each pixel.
    pub triangle: Vec<u32>,
}

impl RenderTarget {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
            depth: vec![f64::INFINITY; width * height],
            triangle: vec![NO_TRIANGLE; width * height],
        }
    }

    #[inline]
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Renders `mesh` placed by `pose` into a fresh target.
pub fn render(mesh: &TriangleMesh, pose: &RigidPose, cam: &PinholeCamera) -> RenderTarget {
    let mut target = RenderTarget::empty(cam.width, cam.height);
    render_into(&mut target, mesh, pose, cam);
    target
}

/// Renders on top of an existing target, z-testing against its depth.
pub fn render_into(
    target: &mut RenderTarget,
    mesh: &TriangleMesh,
    pose: &RigidPose,
    cam: &PinholeCamera,
) {
    let cam_vertices: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.transform_point(v)).collect();
    let mut poly = [Vec3::zeros(); 4];
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let v = tri.map(|i| cam_vertices[i as usize]);
        let n = clip_near(&v, &mut poly);
        for k in 1..n.saturating_sub(1) {
            raster_triangle(target, cam, [poly[0], poly[k], poly[k + 1]], ti as u32);
        }
    }
}

/// Sutherland-Hodgman against `z >= NEAR`. Returns the vertex count (0, 3 or 4).
fn clip_near(v: &[Vec3; 3], out: &mut [Vec3; 4]) -> usize {
    if v.iter().all(|p| p.z > NEAR) {
        out[..3].copy_from_slice(v);
        return 3;
    }
    let mut n = 0;
    for i in 0..3 {
        let a = v[i];
        let b = v[(i + 1) % 3];
        let a_in = a.z > NEAR;
        let b_in = b.z > NEAR;
        if a_in {
            out[n] = a;
            n += 1;
        }
        if a_in != b_in {
            let t = (NEAR - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR * (1.0 + 1e-9);
            out[n] = p;
            n += 1;
        }
    }
    n
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Whether pixels lying exactly on the directed edge `a -> b` belong to the
/// triangle. A shared edge is traversed in opposite directions by its two
/// triangles, so exactly one of them owns it.
#[inline]
fn owns_edge(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let (dx, dy) = (bx - ax, by - ay);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn raster_triangle(target: &mut RenderTarget, cam: &PinholeCamera, v: [Vec3; 3], id: u32) {
    let mut s = v.map(|p| {
        let iz = 1.0 / p.z;
        [cam.fx * p.x * iz + cam.cx, cam.fy * p.y * iz + cam.cy, iz]
    });
    let mut area = edge(s[0][0], s[0][1], s[1][0], s[1][1], s[2][0], s[2][1]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        s.swap(1, 2);
        area = -area;
    }
    let xmin = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let ymin = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let xmax = s
        .iter()
        .map(|p| p[0])
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(target.width as f64 - 1.0);
    let ymax = s
        .iter()
        .map(|p| p[1])
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(target.height as f64 - 1.0);
    if xmin > xmax || ymin > ymax {
        return;
    }
    let owns = [
        owns_edge(s[1][0], s[1][1], s[2][0], s[2][1]),
        owns_edge(s[2][0], s[2][1], s[0][0], s[0][1]),
        owns_edge(s[0][0], s[0][1], s[1][0], s[1][1]),
    ];
    let inv_area = 1.0 / area;
    let w = target.width;
    for y in ymin as usize..=ymax as usize {
        let py = y as f64;
        for x in xmin as usize..=xmax as usize {
            let px = x as f64;
            let e0 = edge(s[1][0], s[1][1], s[2][0], s[2][1], px, py);
            let e1 = edge(s[2][0], s[2][1], s[0][0], s[0][1], px, py);
            let e2 = edge(s[0][0], s[0][1], s[1][0], s[1][1], px, py);
            let inside = (e0 > 0.0 || (e0 == 0.0 && owns[0]))
                && (e1 > 0.0 || (e1 == 0.0 && owns[1]))
                && (e2 > 0.0 || (e2 == 0.0 && owns[2]));
            if !inside {
                continue;
            }
            let inv_z = (e0 * s[0][2] + e1 * s[1][2] + e2 * s[2][2]) * inv_area;
            let z = 1.0 / inv_z;
            let i = y * w + x;
            if z < target.depth[i] {
                target.depth[i] = z;
                target.mask[i] = true;
                target.triangle[i] = id;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_x, rot_y};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    /// Moller-Trumbore, returns the ray parameter along a ray from the origin.
    fn ray_triangle(dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
        let e1 = tri[1] - tri[0];
        let e2 = tri[2] - tri[0];
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-15 {
            return None;
        }
        let inv = 1.0 / det;
        let s = -tri[0];
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&q) * inv;
        (t > 0.0).then_some(t)
    }

    fn ray_cast_oracle(mesh: &TriangleMesh, pose: &RigidPose, cam: &PinholeCamera) -> Vec<f64> {
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len())
            .map(|i| mesh.triangle(i).map(|v| pose.transform_point(&v)))
            .collect();
        let mut out = vec![f64::INFINITY; cam.width * cam.height];
        for y in 0..cam.height {
            for x in 0..cam.width {
                // direction with unit z so the ray parameter is the depth
                let dir = cam.backproject_unchecked(x as f64, y as f64, 1.0);
                for t in &tris {
                    if let Some(z) = ray_triangle(&dir, t) {
                        let i = y * cam.width + x;
                        out[i] = out[i].min(z);
                    }
                }
            }
        }
        out
    }

    fn single_triangle() -> TriangleMesh {
        TriangleMesh::new_uncentered(
            vec![
                Vec3::new(-0.5, -0.5, 0.0),
                Vec3::new(0.5, -0.5, 0.0),
                Vec3::new(0.0, 0.5, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn triangle_on_optical_axis() {
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let t = render(&single_triangle(), &pose, &cam());
        assert!(t.covered(320, 240));
        assert!((t.depth_at(320, 240) - 1.0).abs() < 1e-6);
        for (m, d) in t.mask.iter().zip(&t.depth) {
            assert_eq!(*m, d.is_finite());
            if *m {
                assert!(*d > 0.0);
            }
        }
    }

    #[test]
    fn mesh_behind_camera_is_empty() {
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, -2.0));
        let t = render(&TriangleMesh::cuboid(1.0, 1.0, 1.0), &pose, &cam());
        assert!(t.is_empty());
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // a big floor quad running from behind the camera to far in front
        let quad = TriangleMesh::new_uncentered(
            vec![
                Vec3::new(-1.0, 0.2, -1.0),
                Vec3::new(1.0, 0.2, -1.0),
                Vec3::new(1.0, 0.2, 5.0),
                Vec3::new(-1.0, 0.2, 5.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let t = render(&quad, &RigidPose::identity(), &cam());
        assert!(!t.is_empty());
        // the floor is below the horizon only
        for y in 0..240 {
            assert!(!t.covered(320, y));
        }
        assert!(t.covered(320, 479));
        let z = t.depth_at(320, 479);
        // y = 0.2 plane seen at v - cy = 239 px: z = 0.2 * 500 / 239
        assert!((z - 0.2 * 500.0 / 239.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_matches_ray_casting() {
        let mesh = TriangleMesh::icosphere(1.0, 3);
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 2.0));
        let c = cam();
        let t = render(&mesh, &pose, &c);
        let oracle = ray_cast_oracle(&mesh, &pose, &c);
        let mut agree = 0usize;
        for i in 0..oracle.len() {
            let hit = oracle[i].is_finite();
            if hit == t.mask[i] {
                agree += 1;
                if hit {
                    assert!((oracle[i] - t.depth[i]).abs() < 1e-4);
                }
            }
        }
        let frac = agree as f64 / oracle.len() as f64;
        assert!(frac >= 0.995, "agreement {frac}");
    }

    #[test]
    fn zbuffer_keeps_nearest_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = PinholeCamera::new(60.0, 60.0, 32.0, 24.0, 64, 48).unwrap();
        for _ in 0..20 {
            let mut vertices = Vec::new();
            let mut triangles = Vec::new();
            for t in 0..6u32 {
                for _ in 0..3 {
                    vertices.push(Vec3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.4..0.4),
                        rng.random_range(0.8..1.6),
                    ));
                }
                triangles.push([3 * t, 3 * t + 1, 3 * t + 2]);
            }
            let mesh = TriangleMesh::new_uncentered(vertices, triangles).unwrap();
            let target = render(&mesh, &RigidPose::identity(), &c);
            let oracle = ray_cast_oracle(&mesh, &RigidPose::identity(), &c);
            for i in 0..oracle.len() {
                if target.mask[i] {
                    // every triangle covering the pixel is at least as far
                    assert!(target.depth[i] <= oracle[i] + 1e-9);
                    assert!((target.depth[i] - oracle[i]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn shared_edges_neither_overlap_nor_gap() {
        // a fan of triangles around the optical axis, with vertices placed on
        // pixel centres so that edges pass exactly through pixel centres
        let c = PinholeCamera::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap();
        let z = 1.0;
        let pts = [(-20.0, -20.0), (20.0, -20.0), (20.0, 20.0), (-20.0, 20.0)];
        let mut vertices = vec![Vec3::new(0.0, 0.0, z)];
        for (u, v) in pts {
            vertices.push(Vec3::new(u / 100.0, v / 100.0, z));
        }
        let triangles = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]];
        let mesh = TriangleMesh::new_uncentered(vertices, triangles.clone()).unwrap();
        let mut counts = vec![0u32; 64 * 64];
        for tri in &triangles {
            let single = TriangleMesh::new_uncentered(mesh.vertices.clone(), vec![*tri]).unwrap();
            let t = render(&single, &RigidPose::identity(), &c);
            for (k, m) in t.mask.iter().enumerate() {
                counts[k] += *m as u32;
            }
        }
        // interior of the square (excluding its outer boundary) is covered exactly once
        for y in 13..52 {
            for x in 13..52 {
                assert_eq!(counts[y * 64 + x], 1, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn visible_vertices_fall_inside_dilated_mask_and_rendering_is_deterministic() {
        let mesh = TriangleMesh::cylinder(0.05, 0.12, 20);
        let pose = RigidPose::new(rot_x(0.4) * rot_y(-0.7), Vec3::new(0.01, -0.02, 0.5));
        let c = cam();
        let t = render(&mesh, &pose, &c);
        assert_eq!(t, render(&mesh, &pose, &c));
        for v in &mesh.vertices {
            let p = pose.transform_point(v);
            let px = c.project(&p).unwrap();
            let (x, y) = (px.x.round() as i64, px.y.round() as i64);
            let mut hit = false;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx >= 0 && yy >= 0 && (xx as usize) < c.width && (yy as usize) < c.height {
                        hit |= t.covered(xx as usize, yy as usize);
                    }
                }
            }
            assert!(hit, "vertex at {px:?} outside mask");
        }
    }
}
