//! Perturbation-convergence study: perturb the ground truth, track back on
//! the same frame and score the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regiontrack_core::geometry::{rotation_angle, Vec3};
use regiontrack_core::metrics::linemod_pass;
use regiontrack_core::synth::perturb_pose;
use regiontrack_core::tracker::FramePyramid;
use regiontrack_core::{DistanceVolume, Frame, NoClock, RigidPose, TemplateSet, Tracker, TrackerConfig};

use crate::error::Result;

/// Upper edges of the rotational error histogram bins, degrees. A final
/// open bin collects everything above the last edge.
pub const ERROR_BINS_DEG: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 45.0];

#[derive(Clone, Debug, PartialEq)]
pub struct StudyCell {
    pub theta_deg: f64,
    pub scheme: Vec<usize>,
    pub trials: usize,
    pub score: f64,
    pub histogram: [usize; ERROR_BINS_DEG.len() + 1],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trial {
    pub rot_error_deg: f64,
    pub pass: bool,
}

pub struct StudyInput<'a> {
    pub templates: &'a TemplateSet,
    pub volume: Option<&'a DistanceVolume>,
    pub config: &'a TrackerConfig,
    pub frames: &'a [Frame],
    pub ground_truth: &'a [RigidPose],
    /// Points for the mean-vertex-distance test.
    pub points: &'a [Vec3],
    pub diameter: f64,
}

/// Trial seed: independent of thread scheduling.
fn trial_seed(seed: u64, theta_idx: usize, frame: usize, trial: usize) -> u64 {
    seed ^ ((theta_idx as u64) << 48) ^ ((frame as u64) << 24) ^ trial as u64
}

/// Runs `n` trials per frame for each angle and scheme. Translations are
/// perturbed by up to `t_max` meters per axis.
pub fn run_study(
    input: &StudyInput,
    thetas_deg: &[f64],
    schemes: &[Vec<usize>],
    n: usize,
    t_max: f64,
    seed: u64,
) -> Result<Vec<StudyCell>> {
    let mut cells = Vec::new();
    // one tracker per frame, color model trained at the ground truth
    let prepared = input
        .frames
        .par_iter()
        .zip(input.ground_truth)
        .map(|(f, gt)| -> Result<_> {
            let pyr = FramePyramid::new(f, input.config.pyramid_levels)?;
            let mut tr = Tracker::new(input.templates, input.volume, input.config.clone(), *gt)?;
            tr.update_histogram(&pyr.levels[0], gt);
            Ok((pyr, tr))
        })
        .collect::<Result<Vec<_>>>()?;
    for (ti, &theta) in thetas_deg.iter().enumerate() {
        for scheme in schemes {
            let jobs: Vec<(usize, usize)> = (0..prepared.len()).flat_map(|f| (0..n).map(move |k| (f, k))).collect();
            let trials: Vec<Trial> = jobs
                .par_iter()
                .map(|&(fi, k)| {
                    let gt = &input.ground_truth[fi];
                    let (pyr, tr) = &prepared[fi];
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, ti, fi, k));
                    let start = perturb_pose(gt, theta.to_radians(), t_max, &mut rng);
                    let opt = tr.optimize(pyr, &start, scheme, &NoClock);
                    Trial {
                        rot_error_deg: rotation_angle(&(opt.pose.rotation * gt.rotation.transpose())).to_degrees(),
                        pass: linemod_pass(&opt.pose, gt, input.points, input.diameter),
                    }
                })
                .collect();
            let mut histogram = [0usize; ERROR_BINS_DEG.len() + 1];
            for t in &trials {
                let b = ERROR_BINS_DEG
                    .iter()
                    .position(|&e| t.rot_error_deg < e)
                    .unwrap_or(ERROR_BINS_DEG.len());
                histogram[b] += 1;
            }
            let passed = trials.iter().filter(|t| t.pass).count();
            cells.push(StudyCell {
                theta_deg: theta,
                scheme: scheme.clone(),
                trials: trials.len(),
                score: if trials.is_empty() { 1.0 } else { passed as f64 / trials.len() as f64 },
                histogram,
            });
        }
    }
    Ok(cells)
}

pub fn study_header() -> Vec<String> {
    let mut h = vec!["theta_deg".to_string(), "scheme".into(), "trials".into(), "score".into()];
    let mut lo = 0.0;
    for e in ERROR_BINS_DEG {
        h.push(format!("err_{lo}_{e}"));
        lo = e;
    }
    h.push(format!("err_{lo}_inf"));
    h
}

pub fn study_row(c: &StudyCell) -> Vec<String> {
    let mut r = vec![
        c.theta_deg.to_string(),
        crate::config::format_scheme(&c.scheme),
        c.trials.to_string(),
        c.score.to_string(),
    ];
    r.extend(c.histogram.iter().map(|n| n.to_string()));
    r
}
