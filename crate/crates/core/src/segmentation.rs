//! Color histograms and per-pixel foreground posteriors.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{PinholeCamera, RigidPose, Vec2, Vec3};
use crate::image::{DepthImage, Image, Rgb, RgbImage};
use crate::viewspace::ViewTemplate;
use crate::volume::{DistanceVolume, WeightKernel};

/// Likelihood floor added to every bin before normalization.
pub const EPSILON: f64 = 1e-6;
/// Fewest unoccluded interior points accepted for a histogram update.
pub const MIN_FG_SAMPLES: usize = 5;

/// One RGB-D observation with its intrinsics. Depth is in meters, 0 marks
/// missing measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub cam: PinholeCamera,
}

impl Frame {
    pub fn new(rgb: RgbImage, depth: DepthImage, cam: PinholeCamera) -> Result<Self> {
        if rgb.width != depth.width
            || rgb.height != depth.height
            || rgb.width != cam.width
            || rgb.height != cam.height
        {
            return Err(Error::InvalidParameter("frame and camera sizes differ".into()));
        }
        Ok(Self { rgb, depth, cam })
    }

    /// Back-projected scene point at pixel `(x, y)`, if depth is valid.
    #[inline]
    pub fn cloud_at(&self, x: usize, y: usize) -> Option<Vec3> {
        let d = self.depth.get(x, y);
        if d > 0.0 && d.is_finite() {
            Some(self.cam.backproject_unchecked(x as f64, y as f64, d as f64))
        } else {
            None
        }
    }

    /// Dense cloud map, `None` where depth is missing.
    pub fn cloud_map(&self) -> Vec<Option<Vec3>> {
        let mut out = Vec::with_capacity(self.depth.data.len());
        for y in 0..self.depth.height {
            for x in 0..self.depth.width {
                out.push(self.cloud_at(x, y));
            }
        }
        out
    }

    /// Same frame with every missing depth value filled in.
    pub fn inpainted(mut self) -> Result<Self> {
        self.depth = crate::tracker::inpaint_depth(&self.depth)?;
        Ok(self)
    }
}

/// How the class priors `P(FG)`, `P(BG)` are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// Equal priors; the posterior depends on the likelihoods alone.
    #[default]
    Uniform,
    /// `P(FG) = |silhouette| / |image|`, silhouette area from the polygon of
    /// projected contour samples.
    Area,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramConfig {
    pub bins: usize,
    pub blend_rate: f64,
    pub bg_stride: usize,
    pub occlusion_margin: f64,
    pub prior: PriorMode,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            blend_rate: 0.1,
            bg_stride: 4,
            occlusion_margin: 0.05,
            prior: PriorMode::Uniform,
        }
    }
}

/// Foreground and background RGB distributions with cached posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorHistogram {
    bins: usize,
    shift: u32,
    fg: Vec<f64>,
    bg: Vec<f64>,
    prior_fg: f64,
    initialized: bool,
    posterior: Vec<f64>,
}

impl ColorHistogram {
    /// `bins` per channel, a power of two between 1 and 256.
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 || bins > 256 || !bins.is_power_of_two() {
            return Err(Error::InvalidParameter("histogram bins must be a power of two <= 256".into()));
        }
        let n = bins * bins * bins;
        let u = 1.0 / n as f64;
        Ok(Self {
            bins,
            shift: 8 - bins.trailing_zeros(),
            fg: vec![u; n],
            bg: vec![u; n],
            prior_fg: 0.5,
            initialized: false,
            posterior: vec![0.5; n],
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn prior_fg(&self) -> f64 {
        self.prior_fg
    }

    #[inline]
    pub fn bin_of(&self, c: Rgb) -> usize {
        let s = self.shift;
        let (r, g, b) = ((c[0] as u32 >> s) as usize, (c[1] as u32 >> s) as usize, (c[2] as u32 >> s) as usize);
        (r * self.bins + g) * self.bins + b
    }

    pub fn fg_likelihood(&self, c: Rgb) -> f64 {
        self.fg[self.bin_of(c)]
    }

    pub fn bg_likelihood(&self, c: Rgb) -> f64 {
        self.bg[self.bin_of(c)]
    }

    pub fn fg_distribution(&self) -> &[f64] {
        &self.fg
    }

    pub fn bg_distribution(&self) -> &[f64] {
        &self.bg
    }

    fn normalized(&self, colors: &[Rgb]) -> Vec<f64> {
        let n = self.fg.len();
        let mut h = vec![0.0; n];
        for &c in colors {
            h[self.bin_of(c)] += 1.0;
        }
        let total = colors.len() as f64;
        let norm = 1.0 + EPSILON * n as f64;
        for v in &mut h {
            *v = (*v / total + EPSILON) / norm;
        }
        h
    }

    /// Blends in the distributions of the given samples. The first call
    /// replaces the histograms outright.
    pub fn observe(&mut self, fg: &[Rgb], bg: &[Rgb], prior_fg: f64, blend_rate: f64) {
        if fg.is_empty() || bg.is_empty() {
            return;
        }
        let ofg = self.normalized(fg);
        let obg = self.normalized(bg);
        let prior_fg = prior_fg.clamp(1e-6, 1.0 - 1e-6);
        if !self.initialized {
            self.fg = ofg;
            self.bg = obg;
            self.prior_fg = prior_fg;
            self.initialized = true;
        } else {
            let a = blend_rate.clamp(0.0, 1.0);
            if a == 0.0 {
                return;
            }
            for (h, o) in self.fg.iter_mut().zip(&ofg) {
                *h = (1.0 - a) * *h + a * o;
            }
            for (h, o) in self.bg.iter_mut().zip(&obg) {
                *h = (1.0 - a) * *h + a * o;
            }
            self.prior_fg = (1.0 - a) * self.prior_fg + a * prior_fg;
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        let pf = self.prior_fg;
        let pb = 1.0 - pf;
        for ((p, f), b) in self.posterior.iter_mut().zip(&self.fg).zip(&self.bg) {
            let num = f * pf;
            *p = num / (num + b * pb);
        }
    }

    /// `P(FG | color)`.
    #[inline]
    pub fn posterior_fg(&self, c: Rgb) -> f64 {
        self.posterior[self.bin_of(c)]
    }

    /// Updates from a frame at a (converged) pose: interior samples give the
    /// foreground, pixels outside the projected bounding rectangle the
    /// background. Returns false and leaves the histogram untouched when
    /// too few interior samples are visible.
    pub fn update(
        &mut self,
        frame: &Frame,
        pose: &RigidPose,
        template: &ViewTemplate,
        bbox_corners: &[Vec3; 8],
        cfg: &HistogramConfig,
    ) -> bool {
        let cam = &frame.cam;
        let mut fg = Vec::with_capacity(template.interior.len());
        for s in &template.interior {
            let p = pose.transform_point(&s.point);
            if p.z <= crate::geometry::MIN_DEPTH {
                continue;
            }
            let uv = cam.project_unchecked(&p);
            let Some((x, y)) = frame.rgb.nearest(uv.x, uv.y) else {
                continue;
            };
            let d = frame.depth.get(x, y) as f64;
            if d > 0.0 && d + cfg.occlusion_margin < p.z {
                continue;
            }
            fg.push(frame.rgb.get(x, y));
        }
        if fg.len() < MIN_FG_SAMPLES {
            log::warn!("histogram update skipped: {} visible interior points", fg.len());
            return false;
        }

        let rect = projected_rect(cam, pose, bbox_corners);
        let stride = cfg.bg_stride.max(1);
        let mut bg = Vec::new();
        for y in (0..frame.rgb.height).step_by(stride) {
            for x in (0..frame.rgb.width).step_by(stride) {
                if let Some((u0, v0, u1, v1)) = rect {
                    let (u, v) = (x as f64, y as f64);
                    if u >= u0 && u <= u1 && v >= v0 && v <= v1 {
                        continue;
                    }
                }
                bg.push(frame.rgb.get(x, y));
            }
        }
        if bg.is_empty() {
            log::warn!("histogram update skipped: no background pixels");
            return false;
        }

        let prior = match cfg.prior {
            PriorMode::Uniform => 0.5,
            PriorMode::Area => {
                let pts: Vec<Vec2> = template
                    .contour
                    .iter()
                    .map(|s| pose.transform_point(&s.point))
                    .filter(|p| p.z > crate::geometry::MIN_DEPTH)
                    .map(|p| cam.project_unchecked(&p))
                    .collect();
                polygon_area(&pts) / (cam.width * cam.height) as f64
            }
        };
        self.observe(&fg, &bg, prior, cfg.blend_rate);
        true
    }
}

/// Axis-aligned image rectangle `(u0, v0, u1, v1)` spanned by the projected
/// corners; `None` if any corner is behind the camera.
pub fn projected_rect(cam: &PinholeCamera, pose: &RigidPose, corners: &[Vec3; 8]) -> Option<(f64, f64, f64, f64)> {
    let mut r = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in corners {
        let uv = cam.project(&pose.transform_point(c)).ok()?;
        r = (r.0.min(uv.x), r.1.min(uv.y), r.2.max(uv.x), r.3.max(uv.y));
    }
    Some(r)
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(pts: &[Vec2]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        s += a.x * b.y - b.x * a.y;
    }
    (s * 0.5).abs()
}

/// Optional depth-based reweighting of the color posterior.
#[derive(Clone, Copy, Debug)]
pub struct CloudWeighting<'a> {
    pub volume: &'a DistanceVolume,
    pub sigma: f64,
    pub kernel: WeightKernel,
}

/// `(P_f, P_b)` at pixel `(x, y)`: the color posterior, times the cloud
/// weight when a volume is given. Pixels without depth get zero weight.
#[inline]
pub fn posterior_joint(
    hist: &ColorHistogram,
    cloud: Option<&CloudWeighting>,
    frame: &Frame,
    x: usize,
    y: usize,
    pose: &RigidPose,
) -> (f64, f64) {
    let mut pf = hist.posterior_fg(frame.rgb.get(x, y));
    if let Some(w) = cloud {
        pf *= match frame.cloud_at(x, y) {
            Some(c) => w.volume.cloud_weight(&c, pose, w.sigma, w.kernel),
            None => 0.0,
        };
    }
    (pf, 1.0 - pf)
}

/// Dense `P_f` map, for debugging and segmentation checks.
pub fn posterior_map(
    hist: &ColorHistogram,
    cloud: Option<&CloudWeighting>,
    frame: &Frame,
    pose: &RigidPose,
) -> Image<f32> {
    let mut out = Image::new(frame.rgb.width, frame.rgb.height, 0.0f32);
    for y in 0..out.height {
        for x in 0..out.width {
            out.set(x, y, posterior_joint(hist, cloud, frame, x, y, pose).0 as f32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;
    use crate::raster::render;
    use crate::viewspace::{build_view, TemplateConfig};

    const RED: Rgb = [200, 30, 30];
    const GREEN: Rgb = [30, 180, 40];
    const BLUE: Rgb = [20, 40, 210];

    #[test]
    fn first_update_equals_observation() {
        let mut h = ColorHistogram::new(32).unwrap();
        h.observe(&[RED, RED, GREEN], &[BLUE], 0.3, 0.1);
        let n = 32.0f64.powi(3);
        let norm = 1.0 + EPSILON * n;
        assert!((h.fg_likelihood(RED) - (2.0 / 3.0 + EPSILON) / norm).abs() < 1e-15);
        assert!((h.fg_likelihood(GREEN) - (1.0 / 3.0 + EPSILON) / norm).abs() < 1e-15);
        assert!((h.bg_likelihood(BLUE) - (1.0 + EPSILON) / norm).abs() < 1e-15);
        assert_eq!(h.prior_fg(), 0.3);
        for d in [h.fg_distribution(), h.bg_distribution()] {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn blend_rate_zero_keeps_histogram() {
        let mut h = ColorHistogram::new(16).unwrap();
        h.observe(&[RED], &[BLUE], 0.5, 0.1);
        let before = h.clone();
        h.observe(&[GREEN], &[GREEN], 0.2, 0.0);
        assert_eq!(h, before);
    }

    #[test]
    fn blending_is_convex_and_normalized() {
        let mut h = ColorHistogram::new(8).unwrap();
        h.observe(&[RED], &[BLUE], 0.5, 0.1);
        let old = h.fg_likelihood(GREEN);
        h.observe(&[GREEN], &[BLUE], 0.5, 0.25);
        let fresh = ColorHistogram::new(8).unwrap().normalized(&[GREEN])[h.bin_of(GREEN)];
        assert!((h.fg_likelihood(GREEN) - (0.75 * old + 0.25 * fresh)).abs() < 1e-15);
        assert!((h.fg_distribution().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn posterior_cases() {
        let mut h = ColorHistogram::new(32).unwrap();
        h.observe(&[RED; 10], &[GREEN; 10], 0.5, 0.1);
        assert!(h.posterior_fg(RED) > 0.99);
        assert!(h.posterior_fg(GREEN) < 0.01);
        // unseen in both: equal floors, posterior = prior
        assert!((h.posterior_fg(BLUE) - 0.5).abs() < 1e-12);

        let mut u = ColorHistogram::new(32).unwrap();
        u.observe(&[RED, GREEN], &[RED, GREEN], 0.2, 0.1);
        assert!((u.posterior_fg(RED) - 0.2).abs() < 1e-12);
        assert!((u.posterior_fg(BLUE) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bins_must_be_power_of_two() {
        assert!(ColorHistogram::new(0).is_err());
        assert!(ColorHistogram::new(24).is_err());
        assert!(ColorHistogram::new(512).is_err());
        let h = ColorHistogram::new(1).unwrap();
        assert_eq!(h.bin_of([255, 255, 255]), 0);
    }

    #[test]
    fn polygon_area_of_square() {
        let sq = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0)];
        assert_eq!(polygon_area(&sq), 4.0);
        let rev: Vec<Vec2> = sq.iter().rev().cloned().collect();
        assert_eq!(polygon_area(&rev), 4.0);
    }

    struct Scene {
        frame: Frame,
        mask: Vec<bool>,
        pose: RigidPose,
        mesh: TriangleMesh,
        template: ViewTemplate,
    }

    /// A red box 0.6 m away on `bg`; `patch` optionally paints a rectangle
    /// of the given color 0.4 m behind the box.
    fn scene(bg: Rgb, patch: Option<(Rgb, [usize; 4])>) -> Scene {
        let cam = PinholeCamera::vga(525.0);
        let mesh = TriangleMesh::cuboid(0.1, 0.08, 0.06);
        let pose = RigidPose::new(
            crate::geometry::rot_y(0.4) * crate::geometry::rot_x(-0.3),
            Vec3::new(0.0, 0.0, 0.6),
        );
        let rt = render(&mesh, &pose, &cam);
        let mut rgb = Image::new(640, 480, bg);
        let mut depth = Image::new(640, 480, 2.0f32);
        if let Some((c, [x0, y0, x1, y1])) = patch {
            for y in y0..y1 {
                for x in x0..x1 {
                    rgb.set(x, y, c);
                    depth.set(x, y, 1.0);
                }
            }
        }
        for i in 0..rt.mask.len() {
            if rt.mask[i] {
                rgb.data[i] = RED;
                depth.data[i] = rt.depth[i] as f32;
            }
        }
        let frame = Frame::new(rgb, depth, cam).unwrap();
        let cfg = TemplateConfig::default();
        let tcam = cfg.camera_for(&mesh).unwrap();
        let d = mesh.diameter().unwrap();
        let o = pose.camera_in_object().normalize();
        let template = build_view(&mesh, &tcam, &cfg, d, 0, &o).unwrap();
        Scene {
            frame,
            mask: rt.mask,
            pose,
            mesh,
            template,
        }
    }

    fn iou(map: &Image<f32>, mask: &[bool]) -> f64 {
        let (mut inter, mut uni) = (0usize, 0usize);
        for (p, &m) in map.data.iter().zip(mask) {
            let f = *p > 0.5;
            inter += (f && m) as usize;
            uni += (f || m) as usize;
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn uniform_background_lands_in_its_bins() {
        let s = scene(GREEN, None);
        let mut h = ColorHistogram::new(32).unwrap();
        let corners = s.mesh.bounding_box_corners();
        assert!(h.update(&s.frame, &s.pose, &s.template, &corners, &HistogramConfig::default()));
        assert!(h.bg_likelihood(GREEN) > 0.9);
        assert!(h.fg_likelihood(RED) > 0.9);
        assert!(h.posterior_fg(RED) > 0.99);
    }

    #[test]
    fn occluded_interior_points_leave_histogram_unchanged() {
        let mut s = scene(GREEN, None);
        // a wall 0.2 m in front of everything
        for d in &mut s.frame.depth.data {
            *d = 0.3;
        }
        let mut h = ColorHistogram::new(32).unwrap();
        let corners = s.mesh.bounding_box_corners();
        assert!(!h.update(&s.frame, &s.pose, &s.template, &corners, &HistogramConfig::default()));
        assert!(!h.is_initialized());
    }

    #[test]
    fn cloud_weighting_separates_matched_background() {
        // a red patch behind and beside the box, larger than the box itself
        let s = scene(GREEN, Some((RED, [40, 40, 300, 300])));
        let corners = s.mesh.bounding_box_corners();
        let mut h = ColorHistogram::new(32).unwrap();
        assert!(h.update(&s.frame, &s.pose, &s.template, &corners, &HistogramConfig::default()));
        let vol = DistanceVolume::build(&s.mesh, 0.002, 0.1).unwrap();
        let w = CloudWeighting {
            volume: &vol,
            sigma: 0.025,
            kernel: WeightKernel::Gaussian,
        };
        let color = posterior_map(&h, None, &s.frame, &s.pose);
        let joint = posterior_map(&h, Some(&w), &s.frame, &s.pose);
        let (ic, ij) = (iou(&color, &s.mask), iou(&joint, &s.mask));
        assert!(ic <= 0.5, "color-only iou {ic}");
        assert!(ij >= 0.8, "cloud iou {ij}");
    }

    #[test]
    fn joint_posterior_cases() {
        let s = scene(GREEN, None);
        let corners = s.mesh.bounding_box_corners();
        let mut h = ColorHistogram::new(32).unwrap();
        h.update(&s.frame, &s.pose, &s.template, &corners, &HistogramConfig::default());
        let vol = DistanceVolume::build(&s.mesh, 0.002, 0.1).unwrap();
        let w = CloudWeighting {
            volume: &vol,
            sigma: 0.025,
            kernel: WeightKernel::Gaussian,
        };
        let i = s.mask.iter().position(|&m| m).unwrap() + 3 * 640 + 3;
        let (x, y) = (i % 640, i / 640);
        assert!(s.mask[i]);
        let (pf, pb) = posterior_joint(&h, Some(&w), &s.frame, x, y, &s.pose);
        assert!(pf > 0.95, "{pf}");
        assert_eq!(pf + pb, 1.0);
        // same color, but the scene point is pushed 10 sigma away
        let shifted = RigidPose::new(s.pose.rotation, s.pose.translation + Vec3::new(0.0, 0.0, 0.25 + 0.2));
        let (pf, _) = posterior_joint(&h, Some(&w), &s.frame, x, y, &shifted);
        assert!(pf < 0.01, "{pf}");
        // no volume: plain color posterior
        for (x, y) in [(0, 0), (x, y), (320, 240)] {
            let (pf, pb) = posterior_joint(&h, None, &s.frame, x, y, &s.pose);
            assert_eq!(pf, h.posterior_fg(s.frame.rgb.get(x, y)));
            assert!((0.0..=1.0).contains(&pf) && (0.0..=1.0).contains(&pb));
        }
    }

    #[test]
    fn cloud_map_matches_backprojection() {
        let s = scene(GREEN, None);
        let mut f = s.frame.clone();
        f.depth.set(5, 7, 0.0);
        let map = f.cloud_map();
        assert!(map[7 * 640 + 5].is_none());
        let p = map[100 * 640 + 200].unwrap();
        let back = f.cam.backproject(&Vec2::new(200.0, 100.0), f.depth.get(200, 100) as f64).unwrap();
        assert_eq!(p, back);
    }
}
