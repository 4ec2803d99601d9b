//! Joint contour + plane-to-point Gauss-Newton pose tracking.
//!
//! Every iteration picks the closest view template, shoots two short rays
//! per projected contour sample (one outward, one inward), sums the per-pixel
//! contour Jacobians along each ray into a single row, adds one plane-to-point
//! row per interior sample and solves the resulting 6x6 system. Iterations
//! run coarse to fine over an image pyramid.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix2x6, Matrix6, RowVector6, Vector6};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{jac_twist_action, RigidPose, Twist, Vec2, Vec3, MIN_DEPTH};
use crate::image::{downsample_depth, downsample_rgb, DepthImage};
use crate::segmentation::{posterior_joint, CloudWeighting, ColorHistogram, Frame, HistogramConfig};
use crate::viewspace::{TemplateSet, ViewTemplate};
use crate::volume::{DistanceVolume, WeightKernel};
use crate::Clock;

/// Smoothed Dirac variant paired with the arctangent Heaviside.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiracForm {
    /// `1 / (pi (x^2 + b^2 + 1))`.
    #[default]
    Printed,
    /// `b / (pi (1 + b^2 x^2))`, the true derivative magnitude.
    Exact,
}

/// How interior residuals enter the right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IcpScaling {
    /// `H += lambda J^T J`, `b += sqrt(lambda) J r`.
    Sqrt,
    /// `H += lambda J^T J`, `b += lambda J r`.
    #[default]
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub lambda: f64,
    pub heaviside_b: f64,
    pub dirac: DiracForm,
    pub band_steps: usize,
    pub pyramid_levels: usize,
    /// Iterations per level, coarsest first.
    pub iters_per_level: Vec<usize>,
    pub occlusion_margin: f64,
    pub n_contour: usize,
    pub n_interior: usize,
    pub sigma: f64,
    pub kernel: WeightKernel,
    /// Reweight color posteriors by the distance volume when one is given.
    pub cloud_weighting: bool,
    pub regularization: f64,
    /// Added to the diagonal as a fraction of the mean diagonal entry.
    pub damping: f64,
    pub icp_gate: f64,
    pub icp_scaling: IcpScaling,
    pub reorthonormalize_every: usize,
    pub histogram: HistogramConfig,
    /// Evaluate the joint energy after every finest-level iteration.
    pub record_energy: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda: 1e5,
            heaviside_b: 0.5,
            dirac: DiracForm::Printed,
            band_steps: 8,
            pyramid_levels: 3,
            iters_per_level: vec![2, 2, 2],
            occlusion_margin: 0.05,
            n_contour: 50,
            n_interior: 50,
            sigma: 0.025,
            kernel: WeightKernel::Gaussian,
            cloud_weighting: true,
            regularization: 1e-6,
            damping: 1e-3,
            icp_gate: 0.10,
            icp_scaling: IcpScaling::Linear,
            reorthonormalize_every: 100,
            histogram: HistogramConfig::default(),
            record_energy: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.heaviside_b > 0.0) {
            return bad("heaviside_b must be positive");
        }
        if self.band_steps == 0 || self.pyramid_levels == 0 {
            return bad("band_steps and pyramid_levels must be positive");
        }
        if self.iters_per_level.len() != self.pyramid_levels {
            return bad("iters_per_level needs one entry per pyramid level");
        }
        if !(self.occlusion_margin > 0.0) || !(self.sigma > 0.0) || !(self.icp_gate > 0.0) {
            return bad("margins and sigma must be positive");
        }
        if self.n_contour == 0 || self.n_interior == 0 {
            return bad("sample counts must be positive");
        }
        if !(self.regularization >= 0.0) || !(self.damping >= 0.0) {
            return bad("regularization and damping must be non-negative");
        }
        if self.histogram.blend_rate < 0.0 || self.histogram.blend_rate > 1.0 {
            return bad("blend rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Accumulated Gauss-Newton system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalSystem {
    pub h: Matrix6<f64>,
    pub b: Vector6<f64>,
    pub n_contour_rays: usize,
    pub n_icp_points: usize,
    /// Energy at the linearization point.
    pub energy: f64,
}

impl Default for NormalSystem {
    fn default() -> Self {
        Self {
            h: Matrix6::zeros(),
            b: Vector6::zeros(),
            n_contour_rays: 0,
            n_icp_points: 0,
            energy: 0.0,
        }
    }
}

impl core::ops::AddAssign for NormalSystem {
    fn add_assign(&mut self, o: NormalSystem) {
        self.h += o.h;
        self.b += o.b;
        self.n_contour_rays += o.n_contour_rays;
        self.n_icp_points += o.n_icp_points;
        self.energy += o.energy;
    }
}

impl NormalSystem {
    pub fn is_empty(&self) -> bool {
        self.n_contour_rays == 0 && self.n_icp_points == 0
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }

    /// Adds one row `j` with right-hand side contribution `rhs`.
    #[inline]
    fn add_row(&mut self, j: &RowVector6<f64>, weight: f64, rhs: &Vector6<f64>) {
        self.h += j.transpose() * j * weight;
        self.b += rhs;
    }
}

/// Copy of `sys` with `mu * trace(H) / 6` added to the diagonal. Bounds the
/// step along directions the silhouette barely constrains.
pub fn damped(sys: &NormalSystem, mu: f64) -> NormalSystem {
    let mut out = *sys;
    let add = mu * sys.h.trace() / 6.0;
    for k in 0..6 {
        out.h[(k, k)] += add;
    }
    out
}

/// Solves `(H + reg I) x = b` by Cholesky and checks the back-substitution.
pub fn solve(sys: &NormalSystem, reg: f64) -> Result<Twist> {
    if !sys.is_finite() {
        return Err(Error::NonFinite);
    }
    let a = sys.h + Matrix6::identity() * reg;
    let Some(ch) = a.cholesky() else {
        return Err(Error::Singular(f64::INFINITY));
    };
    let x = ch.solve(&sys.b);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let res = (a * x - sys.b).norm();
    if res > 1e-8 * sys.b.norm() + 1e-300 {
        return Err(Error::Singular(res));
    }
    Ok(Twist::from_vector(&x))
}

/// Fills missing (zero) depth values.
///
/// Each pass sets every missing pixel that has valid 4-neighbours to their
/// mean. After 64 passes any remaining holes take the value of the nearest
/// valid pixel (breadth-first, 4-connected).
pub fn inpaint_depth(depth: &DepthImage) -> Result<DepthImage> {
    let (w, h) = (depth.width, depth.height);
    let valid = |d: f32| d > 0.0 && d.is_finite();
    let mut cur = depth.clone();
    let mut missing: Vec<usize> = (0..w * h).filter(|&i| !valid(cur.data[i])).collect();
    if missing.is_empty() {
        return Ok(cur);
    }
    if missing.len() == w * h {
        return Err(Error::NoValidDepth);
    }
    for v in &mut cur.data {
        if !valid(*v) {
            *v = 0.0;
        }
    }
    let mut fills: Vec<(usize, f32)> = Vec::new();
    for _ in 0..64 {
        if missing.is_empty() {
            break;
        }
        fills.clear();
        missing.retain(|&i| {
            let (x, y) = (i % w, i / w);
            let mut sum = 0.0f32;
            let mut n = 0;
            let mut take = |j: usize| {
                let d = cur.data[j];
                if d > 0.0 {
                    sum += d;
                    n += 1;
                }
            };
            if x > 0 {
                take(i - 1);
            }
            if x + 1 < w {
                take(i + 1);
            }
            if y > 0 {
                take(i - w);
            }
            if y + 1 < h {
                take(i + w);
            }
            if n > 0 {
                fills.push((i, sum / n as f32));
                false
            } else {
                true
            }
        });
        for &(i, d) in &fills {
            cur.data[i] = d;
        }
    }
    if !missing.is_empty() {
        let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| cur.data[i] > 0.0).collect();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let d = cur.data[i];
            let mut visit = |j: usize| {
                if cur.data[j] == 0.0 {
                    cur.data[j] = d;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    Ok(cur)
}

/// Arctangent Heaviside and its Dirac, tabulated on `[-40, 40]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothStep {
    pub b: f64,
    pub form: DiracForm,
    h: Vec<f64>,
    d: Vec<f64>,
}

const LUT_RANGE: f64 = 40.0;
const LUT_STEP: f64 = 0.01;

impl SmoothStep {
    pub fn new(b: f64, form: DiracForm) -> Self {
        let n = (2.0 * LUT_RANGE / LUT_STEP).round() as usize + 1;
        let mut h = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let x = -LUT_RANGE + i as f64 * LUT_STEP;
            h.push(heaviside_exact(x, b));
            d.push(dirac_exact(x, b, form));
        }
        Self { b, form, h, d }
    }

    #[inline]
    fn lookup(table: &[f64], x: f64) -> f64 {
        let g = ((x + LUT_RANGE) / LUT_STEP).clamp(0.0, (table.len() - 1) as f64);
        let i = (g.floor() as usize).min(table.len() - 2);
        let f = g - i as f64;
        table[i] * (1.0 - f) + table[i + 1] * f
    }

    #[inline]
    pub fn heaviside(&self, phi: f64) -> f64 {
        Self::lookup(&self.h, phi)
    }

    #[inline]
    pub fn dirac(&self, phi: f64) -> f64 {
        Self::lookup(&self.d, phi)
    }
}

/// `(pi/2 - atan(b x)) / pi`: 1 deep inside (`x < 0`), 0 far outside.
pub fn heaviside_exact(x: f64, b: f64) -> f64 {
    (-(b * x).atan() + PI / 2.0) / PI
}

/// Magnitude of the smoothed Dirac paired with [`heaviside_exact`].
pub fn dirac_exact(x: f64, b: f64, form: DiracForm) -> f64 {
    match form {
        DiracForm::Printed => 1.0 / (PI * (x * x + b * b + 1.0)),
        DiracForm::Exact => b / (PI * (1.0 + b * b * x * x)),
    }
}

/// Per-pixel contour cost `-log(H (P_f - P_b) + P_b)` and its Jacobian
/// `-(P_f - P_b) / (H (P_f - P_b) + P_b) * delta * grad_phi * A`, where
/// `A = d pi / dX * d Xi / d xi` and `delta` is the Dirac magnitude.
#[inline]
pub fn pixel_term(
    pf: f64,
    pb: f64,
    h: f64,
    delta: f64,
    grad_phi: &Vec2,
    a: &Matrix2x6<f64>,
) -> Option<(f64, RowVector6<f64>)> {
    let denom = h * (pf - pb) + pb;
    if !(denom > 1e-12) {
        return None;
    }
    let factor = (pf - pb) / denom;
    let g = grad_phi.transpose() * a;
    Some((-denom.ln(), g * (-factor * delta)))
}

/// Geometric SDF gradient at ray offset `o` from the contour point: central
/// differences of `|o|`, negated on the inward ray where `phi = -|o|`.
#[inline]
pub fn ray_sdf_gradient(o: &Vec2, outward: bool) -> Vec2 {
    let gx = ((o + Vec2::x()).norm() - (o - Vec2::x()).norm()) * 0.5;
    let gy = ((o + Vec2::y()).norm() - (o - Vec2::y()).norm()) * 0.5;
    let g = Vec2::new(gx, gy);
    if outward {
        g
    } else {
        -g
    }
}

/// `lambda`-independent plane-to-point row and residual for one pair.
#[inline]
pub fn icp_row(s: &Vec3, n: &Vec3, d: &Vec3) -> (RowVector6<f64>, f64) {
    let diff = s - d;
    let w = s.cross(n) + n.cross(&diff);
    let j = -RowVector6::new(n.x, n.y, n.z, w.x, w.y, w.z);
    (j, diff.dot(n))
}

/// Frame and its downsampled versions, finest first. Depth is inpainted.
#[derive(Clone, Debug)]
pub struct FramePyramid {
    pub levels: Vec<Frame>,
}

impl FramePyramid {
    pub fn new(frame: &Frame, levels: usize) -> Result<Self> {
        let base = Frame {
            rgb: frame.rgb.clone(),
            depth: inpaint_depth(&frame.depth)?,
            cam: frame.cam,
        };
        let mut out = Vec::with_capacity(levels);
        out.push(base);
        for l in 1..levels.max(1) {
            let prev = &out[l - 1];
            out.push(Frame {
                rgb: downsample_rgb(&prev.rgb),
                depth: downsample_depth(&prev.depth),
                cam: prev.cam.downsampled(1),
            });
        }
        Ok(Self { levels: out })
    }
}

/// Evenly spaced subset of `n` out of `len` indices.
fn subset(len: usize, n: usize) -> impl Iterator<Item = usize> {
    let n = n.min(len);
    (0..n).map(move |i| i * len / n)
}

/// True if the observed depth at `uv` lies more than `margin` in front of `z`.
#[inline]
fn occluded(frame: &Frame, uv: &Vec2, z: f64, margin: f64) -> Option<bool> {
    let (x, y) = frame.depth.nearest(uv.x, uv.y)?;
    let d = frame.depth.get(x, y) as f64;
    Some(d > 0.0 && d + margin < z)
}

/// Posterior at a continuous position, bilinear over the four nearest
/// pixels.
#[inline]
fn posterior_at(
    hist: &ColorHistogram,
    cloud: Option<&CloudWeighting>,
    frame: &Frame,
    p: &Vec2,
    pose: &RigidPose,
) -> Option<(f64, f64)> {
    let (w, h) = (frame.rgb.width as f64, frame.rgb.height as f64);
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0) {
        return None;
    }
    let x0 = (p.x.floor() as usize).min(frame.rgb.width.saturating_sub(2));
    let y0 = (p.y.floor() as usize).min(frame.rgb.height.saturating_sub(2));
    let fx = p.x - x0 as f64;
    let fy = p.y - y0 as f64;
    let mut pf = 0.0;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if wgt > 0.0 {
            pf += wgt * posterior_joint(hist, cloud, frame, x0 + dx, y0 + dy, pose).0;
        }
    }
    Some((pf, 1.0 - pf))
}

/// Contour rows for one template at one pyramid level.
#[allow(clippy::too_many_arguments)]
pub fn contour_system(
    frame: &Frame,
    pose: &RigidPose,
    template: &ViewTemplate,
    inplane: f64,
    hist: &ColorHistogram,
    cloud: Option<&CloudWeighting>,
    step: &SmoothStep,
    cfg: &TrackerConfig,
) -> NormalSystem {
    let cam = &frame.cam;
    let mut sys = NormalSystem::default();
    for i in subset(template.contour.len(), cfg.n_contour) {
        let s = &template.contour[i];
        let x3 = pose.transform_point(&s.point);
        if x3.z <= MIN_DEPTH {
            continue;
        }
        let x2 = cam.project_unchecked(&x3);
        match occluded(frame, &x2, x3.z, cfg.occlusion_margin) {
            None | Some(true) => continue,
            Some(false) => {}
        }
        let a = cam.jac_projection_unchecked(&x3) * jac_twist_action(&x3);
        let g = s.angle + inplane;
        let dir = Vec2::new(g.cos(), g.sin());
        for outward in [true, false] {
            let sign = if outward { 1.0 } else { -1.0 };
            let mut jr = RowVector6::zeros();
            let mut any = false;
            for k in 0..cfg.band_steps {
                let phi = sign * (k as f64 + 0.5);
                let o = dir * phi;
                let Some((pf, pb)) = posterior_at(hist, cloud, frame, &(x2 + o), pose) else {
                    break;
                };
                let grad = ray_sdf_gradient(&o, outward);
                if let Some((e, j)) = pixel_term(pf, pb, step.heaviside(phi), step.dirac(phi), &grad, &a) {
                    sys.energy += e;
                    jr += j;
                    any = true;
                }
            }
            if any {
                // descend: the twist moves against the summed cost gradient
                sys.add_row(&jr, 1.0, &(-jr.transpose()));
                sys.n_contour_rays += 1;
            }
        }
    }
    if sys.n_contour_rays < 6 {
        log::debug!("only {} contour rays contribute", sys.n_contour_rays);
    }
    sys
}

/// Plane-to-point rows for one template at one pyramid level.
pub fn icp_system(frame: &Frame, pose: &RigidPose, template: &ViewTemplate, cfg: &TrackerConfig) -> NormalSystem {
    let cam = &frame.cam;
    let lambda = cfg.lambda;
    let rhs_scale = match cfg.icp_scaling {
        IcpScaling::Sqrt => lambda.sqrt(),
        IcpScaling::Linear => lambda,
    };
    let mut sys = NormalSystem::default();
    for i in subset(template.interior.len(), cfg.n_interior) {
        let smp = &template.interior[i];
        let s = pose.transform_point(&smp.point);
        if s.z <= MIN_DEPTH {
            continue;
        }
        let n = pose.rotate(&smp.normal);
        let uv = cam.project_unchecked(&s);
        let Some((x, y)) = frame.depth.nearest(uv.x, uv.y) else {
            continue;
        };
        let dz = frame.depth.get(x, y) as f64;
        if !(dz > 0.0) || dz + cfg.occlusion_margin < s.z {
            continue;
        }
        let d = cam.backproject_unchecked(x as f64, y as f64, dz);
        let (j, r) = icp_row(&s, &n, &d);
        if r.abs() > cfg.icp_gate {
            continue;
        }
        sys.add_row(&j, lambda, &(j.transpose() * (r * rhs_scale)));
        sys.energy += lambda * r * r;
        sys.n_icp_points += 1;
    }
    if sys.n_icp_points < 3 {
        if sys.n_icp_points > 0 {
            log::debug!("only {} ICP correspondences; dropped", sys.n_icp_points);
        }
        return NormalSystem::default();
    }
    sys
}

/// Wall-clock seconds spent per phase of one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub preprocess: f64,
    pub view: f64,
    pub contour: f64,
    pub icp: f64,
    pub solve: f64,
    pub histogram: f64,
    pub total: f64,
}

impl PhaseTimes {
    pub fn phase_sum(&self) -> f64 {
        self.preprocess + self.view + self.contour + self.icp + self.solve + self.histogram
    }
}

/// Outcome of an optimization run from one starting pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimization {
    pub pose: RigidPose,
    /// No level produced a usable step.
    pub lost: bool,
    pub iterations: usize,
    pub n_contour_rays: usize,
    pub n_icp_points: usize,
    pub step_norm: f64,
    /// Joint energies on the finest level: before the first iteration and
    /// after each one (only with `record_energy`).
    pub energies: Vec<f64>,
    pub times: PhaseTimes,
}

/// Per-frame tracking record.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub pose: RigidPose,
    pub lost: bool,
    pub view: usize,
    pub n_contour_rays: usize,
    pub n_icp_points: usize,
    pub step_norm: f64,
    pub histogram_updated: bool,
    pub times: PhaseTimes,
}

/// Tracker state for one object.
#[derive(Clone, Debug)]
pub struct Tracker<'a> {
    templates: &'a TemplateSet,
    volume: Option<&'a DistanceVolume>,
    config: TrackerConfig,
    step: SmoothStep,
    hist: ColorHistogram,
    pose: RigidPose,
    updates: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(
        templates: &'a TemplateSet,
        volume: Option<&'a DistanceVolume>,
        config: TrackerConfig,
        initial: RigidPose,
    ) -> Result<Self> {
        config.validate()?;
        if templates.templates.is_empty() {
            return Err(Error::InvalidParameter("empty template set".into()));
        }
        let hist = ColorHistogram::new(config.histogram.bins)?;
        Ok(Self {
            templates,
            volume,
            step: SmoothStep::new(config.heaviside_b, config.dirac),
            config,
            hist,
            pose: initial,
            updates: 0,
        })
    }

    pub fn pose(&self) -> &RigidPose {
        &self.pose
    }

    pub fn set_pose(&mut self, pose: RigidPose) {
        self.pose = pose;
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn histogram(&self) -> &ColorHistogram {
        &self.hist
    }

    pub fn templates(&self) -> &TemplateSet {
        self.templates
    }

    fn cloud(&self) -> Option<CloudWeighting<'a>> {
        match (self.config.cloud_weighting, self.volume) {
            (true, Some(v)) => Some(CloudWeighting {
                volume: v,
                sigma: self.config.sigma,
                kernel: self.config.kernel,
            }),
            _ => None,
        }
    }

    /// Trains the color model on `frame` at `pose`. Returns false when the
    /// update was skipped.
    pub fn update_histogram(&mut self, frame: &Frame, pose: &RigidPose) -> bool {
        let Ok(view) = self.templates.closest_view(pose) else {
            return false;
        };
        let corners = self.templates.bbox_corners();
        self.hist
            .update(frame, pose, &self.templates.templates[view], &corners, &self.config.histogram)
    }

    /// Joint system at `pose` on one pyramid level.
    pub fn system(&self, frame: &Frame, pose: &RigidPose) -> Result<(NormalSystem, usize)> {
        let view = self.templates.closest_view(pose)?;
        let tmpl = &self.templates.templates[view];
        let theta = self.templates.inplane_angle(&pose.rotation, view);
        let cloud = self.cloud();
        let mut sys = contour_system(frame, pose, tmpl, theta, &self.hist, cloud.as_ref(), &self.step, &self.config);
        sys += icp_system(frame, pose, tmpl, &self.config);
        Ok((sys, view))
    }

    /// Joint energy at `pose` on one pyramid level.
    pub fn energy(&self, frame: &Frame, pose: &RigidPose) -> Result<f64> {
        Ok(self.system(frame, pose)?.0.energy)
    }

    /// Runs the coarse-to-fine iterations from `start` without touching the
    /// tracker state. `iters` lists iterations per level, coarsest first.
    pub fn optimize(
        &self,
        pyramid: &FramePyramid,
        start: &RigidPose,
        iters: &[usize],
        clock: &dyn Clock,
    ) -> Optimization {
        let mut out = Optimization {
            pose: *start,
            lost: false,
            iterations: 0,
            n_contour_rays: 0,
            n_icp_points: 0,
            step_norm: 0.0,
            energies: Vec::new(),
            times: PhaseTimes::default(),
        };
        let cloud = self.cloud();
        let n_levels = pyramid.levels.len().min(iters.len());
        let mut solved_any = false;
        let mut attempted = false;
        let mut count = self.updates;
        for li in 0..n_levels {
            let level = n_levels - 1 - li;
            let frame = &pyramid.levels[level];
            let n_iter = iters[iters.len() - n_levels + li];
            for it in 0..n_iter {
                attempted = true;
                let t0 = clock.now();
                let Ok(view) = self.templates.closest_view(&out.pose) else {
                    break;
                };
                let tmpl = &self.templates.templates[view];
                let theta = self.templates.inplane_angle(&out.pose.rotation, view);
                let t1 = clock.now();
                let csys = contour_system(
                    frame,
                    &out.pose,
                    tmpl,
                    theta,
                    &self.hist,
                    cloud.as_ref(),
                    &self.step,
                    &self.config,
                );
                let t2 = clock.now();
                let isys = icp_system(frame, &out.pose, tmpl, &self.config);
                let t3 = clock.now();
                let mut sys = csys;
                sys += isys;
                if self.config.record_energy && level == 0 && it == 0 {
                    out.energies.push(sys.energy);
                }
                let step = if sys.is_empty() {
                    None
                } else {
                    solve(&damped(&sys, self.config.damping), self.config.regularization).ok()
                };
                if let Some(xi) = step {
                    out.pose = out.pose.left_update(&xi);
                    count += 1;
                    if self.config.reorthonormalize_every > 0 && count % self.config.reorthonormalize_every == 0 {
                        out.pose = out.pose.orthonormalized();
                    }
                    out.step_norm = xi.norm();
                    solved_any = true;
                }
                out.iterations += 1;
                out.n_contour_rays = sys.n_contour_rays;
                out.n_icp_points = sys.n_icp_points;
                let t4 = clock.now();
                out.times.view += t1 - t0;
                out.times.contour += t2 - t1;
                out.times.icp += t3 - t2;
                out.times.solve += t4 - t3;
                if self.config.record_energy && level == 0 {
                    let e = self.energy(frame, &out.pose).unwrap_or(f64::NAN);
                    out.energies.push(e);
                }
                if step.is_none() {
                    break;
                }
            }
        }
        out.lost = attempted && !solved_any;
        if out.lost {
            out.pose = *start;
        }
        out
    }

    /// Tracks one frame: optimizes from the current pose, then refreshes the
    /// color model at the result. The histogram is seeded from the first
    /// frame at the initial pose.
    pub fn track_frame(&mut self, frame: &Frame, clock: &dyn Clock) -> Result<FrameReport> {
        let t0 = clock.now();
        let pyramid = FramePyramid::new(frame, self.config.pyramid_levels)?;
        let t1 = clock.now();
        let mut hist_time = 0.0;
        if !self.hist.is_initialized() {
            let pose = self.pose;
            self.update_histogram(&pyramid.levels[0], &pose);
            hist_time += clock.now() - t1;
        }
        let iters = self.config.iters_per_level.clone();
        let opt = self.optimize(&pyramid, &self.pose, &iters, clock);
        self.updates += opt.iterations;
        self.pose = opt.pose;
        let t2 = clock.now();
        let updated = if opt.lost {
            false
        } else {
            let pose = self.pose;
            self.update_histogram(&pyramid.levels[0], &pose)
        };
        let t3 = clock.now();
        hist_time += t3 - t2;
        let mut times = opt.times;
        times.preprocess = t1 - t0;
        times.histogram = hist_time;
        times.total = t3 - t0;
        Ok(FrameReport {
            pose: self.pose,
            lost: opt.lost,
            view: self.templates.closest_view(&self.pose).unwrap_or(0),
            n_contour_rays: opt.n_contour_rays,
            n_icp_points: opt.n_icp_points,
            step_norm: opt.step_norm,
            histogram_updated: updated,
            times,
        })
    }
}
