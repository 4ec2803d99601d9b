//! Synthetic RGB-D sequences with exact ground truth.
//!
//! The object is drawn with flat shading from one directional light over a
//! background wall, optionally behind a moving occluding quad. Depth stays
//! in floating point here; quantization to millimeters happens when frames
//! are written to disk.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{rot_x, rot_y, rot_z, PinholeCamera, RigidPose, TriangleMesh, Vec3};
use crate::image::{Image, Rgb};
use crate::raster::{render_into, RenderTarget, NO_TRIANGLE};
use crate::segmentation::Frame;

/// Neutral color used between matched tiles.
pub const NEUTRAL: Rgb = [128, 128, 128];

#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    Uniform(Rgb),
    /// Image-space checkerboard.
    Tiles { size: usize, a: Rgb, b: Rgb },
    /// Checkerboard of the object's own shaded colors and [`NEUTRAL`].
    FgMatched { size: usize },
}

/// Parametric object motion. At frame `i` the object is rotated by
/// `R_z(inplane_rate i) R_y(angular_rate i) R_x(tilt)` and placed at
/// `(0, 0, distance) + orbit_radius (cos, sin, 0)(angular_rate i) +
/// sweep sin(2 pi i / n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub distance: f64,
    pub tilt: f64,
    pub orbit_radius: f64,
    pub angular_rate: f64,
    pub inplane_rate: f64,
    pub sweep: Vec3,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self {
            distance: 0.6,
            tilt: -0.5,
            orbit_radius: 0.0,
            angular_rate: 0.0,
            inplane_rate: 0.0,
            sweep: Vec3::zeros(),
        }
    }
}

impl Trajectory {
    pub fn pose(&self, i: usize, n_frames: usize) -> RigidPose {
        let fi = i as f64;
        let a = self.angular_rate * fi;
        let rotation = rot_z(self.inplane_rate * fi) * rot_y(a) * rot_x(self.tilt);
        let phase = 2.0 * core::f64::consts::PI * fi / n_frames.max(1) as f64;
        let translation = Vec3::new(0.0, 0.0, self.distance)
            + Vec3::new(a.cos() - 1.0, a.sin(), 0.0) * self.orbit_radius
            + self.sweep * phase.sin();
        RigidPose::new(rotation, translation)
    }
}

/// Square occluder facing the camera, moving linearly in camera coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Occluder {
    pub size: f64,
    pub start: Vec3,
    pub end: Vec3,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSpec {
    pub mesh_id: String,
    pub trajectory: Trajectory,
    pub n_frames: usize,
    pub background: Background,
    /// Depth of the background wall, meters.
    pub wall_depth: f64,
    /// Object colors; triangle `t` of `n` gets `colors[t * len / n]`.
    pub colors: Vec<Rgb>,
    pub depth_noise: f64,
    pub color_noise: f64,
    /// Fraction of pixels whose depth is dropped.
    pub dropout: f64,
    pub occluder: Option<Occluder>,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            mesh_id: "box".into(),
            trajectory: Trajectory::default(),
            n_frames: 100,
            background: Background::Uniform([40, 160, 60]),
            wall_depth: 1.5,
            colors: vec![[200, 60, 40]],
            depth_noise: 0.0,
            color_noise: 0.0,
            dropout: 0.02,
            occluder: None,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvalidParameter("n_frames must be at least 1".into()));
        }
        if self.depth_noise < 0.0 || self.color_noise < 0.0 || !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter("noise levels must be non-negative".into()));
        }
        if self.colors.is_empty() {
            return Err(Error::InvalidParameter("at least one object color".into()));
        }
        if !(self.wall_depth > 0.0) {
            return Err(Error::InvalidParameter("wall depth must be positive".into()));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Vec<RigidPose> {
        (0..self.n_frames).map(|i| self.trajectory.pose(i, self.n_frames)).collect()
    }
}

/// Direction towards the light, camera frame.
fn light_dir() -> Vec3 {
    Vec3::new(-0.4, -0.6, -1.0).normalize()
}

fn shade(c: Rgb, normal: &Vec3) -> Rgb {
    let k = 0.35 + 0.65 * normal.dot(&light_dir()).max(0.0);
    core::array::from_fn(|i| (c[i] as f64 * k).round().clamp(0.0, 255.0) as u8)
}

fn quad(size: f64, center: &Vec3) -> Result<TriangleMesh> {
    let h = size * 0.5;
    let v = vec![
        center + Vec3::new(-h, -h, 0.0),
        center + Vec3::new(h, -h, 0.0),
        center + Vec3::new(h, h, 0.0),
        center + Vec3::new(-h, h, 0.0),
    ];
    TriangleMesh::new_uncentered(v, vec![[0, 2, 1], [0, 3, 2]])
}

/// Renders frame `i`. Noise is drawn from a generator seeded by `(seed, i)`
/// so frames can be produced in any order.
pub fn synthesize_frame(
    spec: &SequenceSpec,
    mesh: &TriangleMesh,
    cam: &PinholeCamera,
    seed: u64,
    i: usize,
) -> Result<Frame> {
    spec.validate()?;
    let pose = spec.trajectory.pose(i, spec.n_frames);
    let (w, h) = (cam.width, cam.height);
    let mut obj = RenderTarget::empty(w, h);
    render_into(&mut obj, mesh, &pose, cam);

    let ntri = mesh.triangles.len();
    let face_color = |t: usize| {
        let c = spec.colors[t * spec.colors.len() / ntri];
        shade(c, &pose.rotate(&mesh.normals[t]))
    };

    let mut rgb = match &spec.background {
        Background::Uniform(c) => Image::new(w, h, *c),
        Background::Tiles { size, a, b } => {
            let s = (*size).max(1);
            let mut img = Image::new(w, h, *a);
            for y in 0..h {
                for x in 0..w {
                    if (x / s + y / s) % 2 == 1 {
                        img.set(x, y, *b);
                    }
                }
            }
            img
        }
        Background::FgMatched { size } => {
            let mut palette: Vec<Rgb> = Vec::new();
            for &t in &obj.triangle {
                if t != NO_TRIANGLE {
                    let c = face_color(t as usize);
                    if !palette.contains(&c) {
                        palette.push(c);
                    }
                }
            }
            if palette.is_empty() {
                palette.push(spec.colors[0]);
            }
            let s = (*size).max(1);
            let mut img = Image::new(w, h, NEUTRAL);
            for y in 0..h {
                for x in 0..w {
                    let (tx, ty) = (x / s, y / s);
                    if (tx + ty) % 2 == 0 {
                        img.set(x, y, palette[(tx / 2 + 3 * ty) % palette.len()]);
                    }
                }
            }
            img
        }
    };
    let mut depth = Image::new(w, h, spec.wall_depth as f32);
    for idx in 0..w * h {
        let t = obj.triangle[idx];
        if t != NO_TRIANGLE && obj.depth[idx] < spec.wall_depth {
            rgb.data[idx] = face_color(t as usize);
            depth.data[idx] = obj.depth[idx] as f32;
        }
    }

    if let Some(occ) = &spec.occluder {
        let f = if spec.n_frames > 1 {
            i as f64 / (spec.n_frames - 1) as f64
        } else {
            0.0
        };
        let center = occ.start + (occ.end - occ.start) * f;
        let q = quad(occ.size, &center)?;
        let mut rt = RenderTarget::empty(w, h);
        render_into(&mut rt, &q, &RigidPose::identity(), cam);
        for idx in 0..w * h {
            if rt.mask[idx] && (rt.depth[idx] as f32) < depth.data[idx] {
                rgb.data[idx] = occ.color;
                depth.data[idx] = rt.depth[idx] as f32;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    if spec.color_noise > 0.0 {
        let n = Normal::new(0.0, spec.color_noise).map_err(|_| Error::InvalidParameter("color noise".into()))?;
        for px in &mut rgb.data {
            for c in px.iter_mut() {
                *c = (*c as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    if spec.depth_noise > 0.0 {
        let n = Normal::new(0.0, spec.depth_noise).map_err(|_| Error::InvalidParameter("depth noise".into()))?;
        for d in &mut depth.data {
            *d = (*d as f64 + n.sample(&mut rng)).max(1e-3) as f32;
        }
    }
    if spec.dropout > 0.0 {
        for d in &mut depth.data {
            if rng.random::<f64>() < spec.dropout {
                *d = 0.0;
            }
        }
    }
    Frame::new(rgb, depth, *cam)
}

/// Perturbs `pose` by `R_x(a) R_y(b) R_z(c)` with each angle uniform in
/// `[-theta_max, theta_max]`, applied on the camera side of the rotation,
/// and per-axis uniform translation offsets in `[-t_max, t_max]`.
pub fn perturb_pose<R: Rng + ?Sized>(pose: &RigidPose, theta_max: f64, t_max: f64, rng: &mut R) -> RigidPose {
    let mut u = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let (a, b, c) = (u(theta_max), u(theta_max), u(theta_max));
    let dt = Vec3::new(u(t_max), u(t_max), u(t_max));
    RigidPose::new(rot_x(a) * rot_y(b) * rot_z(c) * pose.rotation, pose.translation + dt)
}
