//! Precomputed sparse view templates.
//!
//! The model is rendered offline from 642 viewpoints spread evenly over a
//! sphere. Each view keeps a handful of object-local 3D points on the
//! occluding contour (with the 2D outward orientation they had in that view)
//! and of interior surface points with normals. During tracking the closest
//! view stands in for an online rendering.
//!
//! A view direction `v` is the unit vector from the object centroid towards
//! the camera, so the camera position `-R^T t` of a pose can be matched
//! against it directly.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::TAU;
#[allow(unused_imports)]
use num_traits::Float;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geometry::{icosphere_raw, Mat3, PinholeCamera, RigidPose, TriangleMesh, Vec3};
use crate::raster::{render, RenderTarget, NO_TRIANGLE};

pub const VIEW_COUNT: usize = 642;
const MAGIC: &[u8; 4] = b"RTVT";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourSample {
    /// Object-local point on the occluding contour, meters.
    pub point: Vec3,
    /// Outward 2D contour normal angle in the template image, `[0, 2pi)`.
    pub angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteriorSample {
    pub point: Vec3,
    /// Unit normal in the object frame, facing the template camera.
    pub normal: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewTemplate {
    pub view_dir: Vec3,
    /// Object-to-camera rotation of the template rendering.
    pub rotation: Mat3,
    pub contour: Vec<ContourSample>,
    pub interior: Vec<InteriorSample>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemplateConfig {
    pub n_contour: usize,
    pub n_interior: usize,
    /// Camera distance as a multiple of the model diameter.
    pub distance_factor: f64,
    /// Square template image size in pixels.
    pub image_size: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            n_contour: 50,
            n_interior: 50,
            distance_factor: 2.5,
            image_size: 640,
        }
    }
}

impl TemplateConfig {
    /// A camera whose field of view fits the whole model from
    /// `distance_factor * diameter` with a 10% margin.
    pub fn camera_for(&self, mesh: &TriangleMesh) -> Result<PinholeCamera> {
        let diameter = mesh.diameter()?;
        let radius = mesh.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let distance = self.distance_factor * diameter;
        if distance <= radius * 1.05 {
            return Err(Error::InvalidParameter(alloc::format!(
                "camera distance {distance} inside the model bounds"
            )));
        }
        // tangent of the half-angle subtended by the bounding sphere
        let tan_half = radius / (distance * distance - radius * radius).sqrt();
        let half = self.image_size as f64 * 0.5;
        let f = 0.9 * half / tan_half;
        PinholeCamera::new(f, f, half - 0.5, half - 0.5, self.image_size, self.image_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    pub model_id: String,
    pub config: TemplateConfig,
    pub camera: PinholeCamera,
    /// Object-frame bounding box of the model.
    pub bbox: (Vec3, Vec3),
    pub diameter: f64,
    pub templates: Vec<ViewTemplate>,
}

/// Icosahedron subdivided three times: 642 unit directions.
pub fn sample_sphere() -> Vec<Vec3> {
    icosphere_raw(3).0
}

/// Object-to-camera rotation for a camera sitting on `view_dir` and looking
/// at the origin. World +y maps to image-up unless the view is parallel to
/// it, in which case +x is used.
pub fn canonical_rotation(view_dir: &Vec3) -> Mat3 {
    let z = -view_dir.normalize();
    let mut up = Vec3::y();
    if z.cross(&up).norm() < 1e-6 {
        up = Vec3::x();
    }
    let up = (up - z * up.dot(&z)).normalize();
    // image y grows downwards
    let y = -up;
    let x = y.cross(&z);
    Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// Pose that places the model at `distance` in front of the template camera.
pub fn canonical_pose(view_dir: &Vec3, distance: f64) -> RigidPose {
    RigidPose::new(canonical_rotation(view_dir), Vec3::new(0.0, 0.0, distance))
}

const MOORE: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Moore-neighbour tracing of the outer boundary of the component holding
/// the first foreground pixel in raster order. Returns pixels in order.
pub fn trace_outer_boundary(mask: &[bool], width: usize, height: usize) -> Vec<(usize, usize)> {
    let Some(first) = mask.iter().position(|&m| m) else {
        return Vec::new();
    };
    let fg = |x: i64, y: i64| {
        x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && mask[y as usize * width + x as usize]
    };
    let start = ((first % width) as i64, (first / width) as i64);
    let mut out = alloc::vec![(start.0 as usize, start.1 as usize)];
    let mut cur = start;
    // direction from `cur` to its backtrack pixel; west of the first raster
    // pixel is background
    let mut back = 0usize;
    let mut second = None;
    for _ in 0..4 * width * height + 8 {
        let found = (1..=8).map(|k| (back + k) % 8).find(|&d| fg(cur.0 + MOORE[d].0, cur.1 + MOORE[d].1));
        let Some(d) = found else {
            break; // isolated pixel
        };
        let next = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
        if cur == start {
            // Jacob's criterion: leaving the start the same way twice closes the loop
            match second {
                None => second = Some(next),
                Some(s) if s == next => break,
                _ => {}
            }
        }
        // the background pixel examined just before `next`, relative to `next`
        let prev = (cur.0 + MOORE[(d + 7) % 8].0, cur.1 + MOORE[(d + 7) % 8].1);
        let rel = (prev.0 - next.0, prev.1 - next.1);
        back = MOORE.iter().position(|&o| o == rel).unwrap_or(0);
        cur = next;
        if cur != start {
            out.push((cur.0 as usize, cur.1 as usize));
        }
    }
    out
}

/// Outward normal angle of the mask at `(x, y)` from a 3x3 Scharr operator.
/// Falls back to `fallback` where the gradient vanishes.
fn outward_angle(mask: &[bool], width: usize, height: usize, x: usize, y: usize, fallback: f64) -> f64 {
    let m = |dx: i64, dy: i64| -> f64 {
        let (xx, yy) = (x as i64 + dx, y as i64 + dy);
        if xx < 0 || yy < 0 || xx as usize >= width || yy as usize >= height {
            0.0
        } else {
            mask[yy as usize * width + xx as usize] as u8 as f64
        }
    };
    let gx = 3.0 * (m(1, -1) - m(-1, -1)) + 10.0 * (m(1, 0) - m(-1, 0)) + 3.0 * (m(1, 1) - m(-1, 1));
    let gy = 3.0 * (m(-1, 1) - m(-1, -1)) + 10.0 * (m(0, 1) - m(0, -1)) + 3.0 * (m(1, 1) - m(1, -1));
    if gx == 0.0 && gy == 0.0 {
        return fallback;
    }
    wrap_angle((-gy).atan2(-gx))
}

/// Maps an angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    if r < 0.0 {
        r += TAU;
    }
    // -tiny % TAU + TAU rounds up to TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Extracts one view's samples from a rendering made with `pose`.
fn samples_from_render(
    target: &RenderTarget,
    mesh: &TriangleMesh,
    pose: &RigidPose,
    cam: &PinholeCamera,
    cfg: &TemplateConfig,
) -> (Vec<ContourSample>, Vec<InteriorSample>) {
    let (w, h) = (target.width, target.height);
    let inv = pose.inverse();
    let boundary = trace_outer_boundary(&target.mask, w, h);

    // cumulative arc length along the closed boundary
    let n = boundary.len();
    let mut arc = Vec::with_capacity(n + 1);
    arc.push(0.0);
    for i in 0..n {
        let (a, b) = (boundary[i], boundary[(i + 1) % n]);
        let d = if a.0 != b.0 && a.1 != b.1 { core::f64::consts::SQRT_2 } else if a == b { 0.0 } else { 1.0 };
        arc.push(arc[i] + d);
    }
    let total = arc[n];
    let mut contour = Vec::with_capacity(cfg.n_contour);
    for k in 0..cfg.n_contour {
        let s = total * k as f64 / cfg.n_contour as f64;
        let idx = arc.partition_point(|&a| a <= s).saturating_sub(1).min(n - 1);
        let (x, y) = boundary[idx];
        // tangent-based fallback for one-pixel-wide structures
        let (p, q) = (boundary[(idx + n - 1) % n], boundary[(idx + 1) % n]);
        let (tx, ty) = (q.0 as f64 - p.0 as f64, q.1 as f64 - p.1 as f64);
        let fallback = wrap_angle((-tx).atan2(ty));
        let angle = outward_angle(&target.mask, w, h, x, y, fallback);
        // the silhouette edge lies on average half a pixel beyond the centre
        // of the inner boundary pixel
        let u = x as f64 + 0.5 * angle.cos();
        let v = y as f64 + 0.5 * angle.sin();
        let p_cam = cam.backproject_unchecked(u, v, target.depth_at(x, y));
        contour.push(ContourSample {
            point: inv.transform_point(&p_cam),
            angle,
        });
    }

    // stratified grid over the eroded mask
    let inner = |x: usize, y: usize| {
        x > 0
            && y > 0
            && x + 1 < w
            && y + 1 < h
            && target.covered(x, y)
            && target.covered(x - 1, y)
            && target.covered(x + 1, y)
            && target.covered(x, y - 1)
            && target.covered(x, y + 1)
    };
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if target.covered(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    let mut grid = Vec::new();
    let max_step = ((x1 - x0).max(y1 - y0) + 1).max(1);
    for step in (1..=max_step).rev() {
        grid.clear();
        let off = step / 2;
        let mut y = y0 + off;
        while y <= y1 {
            let mut x = x0 + off;
            while x <= x1 {
                if inner(x, y) {
                    grid.push((x, y));
                }
                x += step;
            }
            y += step;
        }
        if grid.len() >= cfg.n_interior {
            break;
        }
    }
    if grid.is_empty() {
        grid.push(boundary[0]);
    }
    let mut interior = Vec::with_capacity(cfg.n_interior);
    for k in 0..cfg.n_interior {
        let idx = if grid.len() >= cfg.n_interior {
            ((2 * k + 1) * grid.len()) / (2 * cfg.n_interior)
        } else {
            k % grid.len()
        };
        let (x, y) = grid[idx];
        let tri = target.triangle[y * w + x];
        let p_cam = cam.backproject_unchecked(x as f64, y as f64, target.depth_at(x, y));
        let point = inv.transform_point(&p_cam);
        let mut normal = if tri == NO_TRIANGLE {
            Vec3::zeros()
        } else {
            mesh.normals[tri as usize]
        };
        // open meshes can show back faces; keep normals facing the camera
        let to_cam = inv.translation - point;
        if normal.dot(&to_cam) < 0.0 {
            normal = -normal;
        }
        interior.push(InteriorSample { point, normal });
    }
    (contour, interior)
}

/// Renders and samples a single viewpoint.
pub fn build_view(
    mesh: &TriangleMesh,
    cam: &PinholeCamera,
    cfg: &TemplateConfig,
    diameter: f64,
    index: usize,
    view_dir: &Vec3,
) -> Result<ViewTemplate> {
    let pose = canonical_pose(view_dir, cfg.distance_factor * diameter);
    let target = render(mesh, &pose, cam);
    if target.is_empty() {
        return Err(Error::EmptyView(index));
    }
    let (contour, interior) = samples_from_render(&target, mesh, &pose, cam, cfg);
    Ok(ViewTemplate {
        view_dir: *view_dir,
        rotation: pose.rotation,
        contour,
        interior,
    })
}

/// Builds all 642 view templates sequentially.
pub fn build_templates(
    mesh: &TriangleMesh,
    cam: &PinholeCamera,
    cfg: &TemplateConfig,
    model_id: &str,
) -> Result<TemplateSet> {
    if cfg.n_contour == 0 || cfg.n_interior == 0 {
        return Err(Error::InvalidParameter("sample counts must be positive".into()));
    }
    let diameter = mesh.diameter()?;
    let templates = sample_sphere()
        .iter()
        .enumerate()
        .map(|(i, v)| build_view(mesh, cam, cfg, diameter, i, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateSet {
        model_id: model_id.into(),
        config: *cfg,
        camera: *cam,
        bbox: mesh.bounding_box(),
        diameter,
        templates,
    })
}

impl TemplateSet {
    /// Index of the template whose view direction best matches the camera
    /// position of `pose`. Ties go to the lowest index.
    pub fn closest_view(&self, pose: &RigidPose) -> Result<usize> {
        let o = pose.camera_in_object();
        let n = o.norm();
        if !(n > 1e-12) {
            return Err(Error::CameraAtCentroid);
        }
        let o = o / n;
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, t) in self.templates.iter().enumerate() {
            let d = t.view_dir.dot(&o);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        Ok(best)
    }

    /// Signed rotation about the viewing axis between `rotation` and the
    /// canonical rotation of template `index`.
    pub fn inplane_angle(&self, rotation: &Mat3, index: usize) -> f64 {
        inplane_angle(rotation, &self.templates[index].rotation)
    }

    pub fn bbox_corners(&self) -> [Vec3; 8] {
        let (lo, hi) = self.bbox;
        core::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.str(&self.model_id);
        w.u32(self.config.n_contour as u32);
        w.u32(self.config.n_interior as u32);
        w.f64(self.config.distance_factor);
        w.u32(self.config.image_size as u32);
        let c = &self.camera;
        for v in [c.fx, c.fy, c.cx, c.cy] {
            w.f64(v);
        }
        w.u32(c.width as u32);
        w.u32(c.height as u32);
        for v in self.bbox.0.iter().chain(self.bbox.1.iter()) {
            w.f64(*v);
        }
        w.f64(self.diameter);
        w.u32(self.templates.len() as u32);
        for t in &self.templates {
            for v in t.view_dir.iter() {
                w.f64(*v);
            }
            for v in t.rotation.iter() {
                w.f64(*v);
            }
            w.u32(t.contour.len() as u32);
            for s in &t.contour {
                for v in s.point.iter() {
                    w.f64(*v);
                }
                w.f64(s.angle);
            }
            w.u32(t.interior.len() as u32);
            for s in &t.interior {
                for v in s.point.iter().chain(s.normal.iter()) {
                    w.f64(*v);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<TemplateSet> {
        let mut r = Reader::open(data, MAGIC, VERSION)?;
        let model_id = r.str()?;
        let config = TemplateConfig {
            n_contour: r.u32()? as usize,
            n_interior: r.u32()? as usize,
            distance_factor: r.f64()?,
            image_size: r.u32()? as usize,
        };
        let (fx, fy, cx, cy) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let (width, height) = (r.u32()? as usize, r.u32()? as usize);
        let camera = PinholeCamera::new(fx, fy, cx, cy, width, height)?;
        let lo = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let hi = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let diameter = r.f64()?;
        let n_views = r.count(24)?;
        let mut templates = Vec::with_capacity(n_views);
        for _ in 0..n_views {
            let view_dir = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
            let mut rotation = Mat3::zeros();
            for v in rotation.iter_mut() {
                *v = r.f64()?;
            }
            let nc = r.count(32)?;
            let mut contour = Vec::with_capacity(nc);
            for _ in 0..nc {
                let point = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
                contour.push(ContourSample {
                    point,
                    angle: r.f64()?,
                });
            }
            let ni = r.count(48)?;
            let mut interior = Vec::with_capacity(ni);
            for _ in 0..ni {
                let point = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
                let normal = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
                interior.push(InteriorSample { point, normal });
            }
            templates.push(ViewTemplate {
                view_dir,
                rotation,
                contour,
                interior,
            });
        }
        r.finish()?;
        Ok(TemplateSet {
            model_id,
            config,
            camera,
            bbox: (lo, hi),
            diameter,
            templates,
        })
    }
}

/// `atan2` of the in-plane part of `rotation * canonical^T`.
pub fn inplane_angle(rotation: &Mat3, canonical: &Mat3) -> f64 {
    let r = rotation * canonical.transpose();
    r[(1, 0)].atan2(r[(0, 0)])
}
