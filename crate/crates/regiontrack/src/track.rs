//! Sequence tracking, trajectory CSV files and runtime summaries.

use std::fs;
use std::path::Path;

use regiontrack_core::segmentation::{posterior_map, CloudWeighting};
use regiontrack_core::tracker::FrameReport;
use regiontrack_core::{Clock, DistanceVolume, Frame, RigidPose, TemplateSet, Tracker, TrackerConfig};

use crate::error::{Error, Result};
use crate::overlay::draw_contour;
use crate::sequence::{frame_name, write_gray, write_rgb, Sequence};

#[derive(Clone, Debug, Default)]
pub struct TrackOptions<'a> {
    /// Directory for RGB frames with the projected contour drawn in.
    pub overlay_dir: Option<&'a Path>,
    /// Directory for 8-bit foreground posterior maps.
    pub posterior_dir: Option<&'a Path>,
}

/// Tracks every frame of a sequence starting from `init`.
pub fn track_sequence(
    seq: &Sequence,
    templates: &TemplateSet,
    volume: Option<&DistanceVolume>,
    config: &TrackerConfig,
    init: RigidPose,
    opts: &TrackOptions,
    clock: &dyn Clock,
) -> Result<Vec<FrameReport>> {
    for d in [opts.overlay_dir, opts.posterior_dir].into_iter().flatten() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut tracker = Tracker::new(templates, volume, config.clone(), init)?;
    let mut out = Vec::with_capacity(seq.n_frames);
    for i in 0..seq.n_frames {
        let frame = seq.frame(i)?;
        let rep = tracker.track_frame(&frame, clock)?;
        if rep.lost {
            log::warn!("frame {i}: tracking lost, holding pose");
        }
        if let Some(dir) = opts.overlay_dir {
            let mut rgb = frame.rgb.clone();
            draw_contour(&mut rgb, &frame.cam, templates, &rep.pose, [255, 255, 0]);
            write_rgb(&dir.join(frame_name(i)), &rgb)?;
        }
        if let Some(dir) = opts.posterior_dir {
            dump_posterior(&dir.join(frame_name(i)), &tracker, volume, &frame, &rep.pose)?;
        }
        out.push(rep);
    }
    Ok(out)
}

fn dump_posterior(path: &Path, tracker: &Tracker, volume: Option<&DistanceVolume>, frame: &Frame, pose: &RigidPose) -> Result<()> {
    let cfg = tracker.config();
    let cloud = volume.filter(|_| cfg.cloud_weighting).map(|v| CloudWeighting {
        volume: v,
        sigma: cfg.sigma,
        kernel: cfg.kernel,
    });
    let map = posterior_map(tracker.histogram(), cloud.as_ref(), frame, pose);
    write_gray(path, &map)
}

pub const TRAJECTORY_HEADER: [&str; 25] = [
    "frame",
    "r00",
    "r01",
    "r02",
    "tx",
    "r10",
    "r11",
    "r12",
    "ty",
    "r20",
    "r21",
    "r22",
    "tz",
    "lost",
    "view",
    "contour_rays",
    "icp_points",
    "step_norm",
    "histogram_updated",
    "preprocess_ms",
    "view_ms",
    "contour_ms",
    "icp_ms",
    "solve_ms",
    "histogram_ms",
];

/// One parsed trajectory row.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub pose: RigidPose,
    pub lost: bool,
    /// `preprocess, view, contour, icp, solve, histogram, total`, ms.
    pub times_ms: [f64; 7],
}

pub fn write_trajectory(path: &Path, reports: &[FrameReport]) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    header.push("total_ms");
    w.write_record(&header).map_err(err)?;
    for (i, r) in reports.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(r.pose.to_row_major().iter().map(|v| v.to_string()));
        row.push((r.lost as u8).to_string());
        row.push(r.view.to_string());
        row.push(r.n_contour_rays.to_string());
        row.push(r.n_icp_points.to_string());
        row.push(r.step_norm.to_string());
        row.push((r.histogram_updated as u8).to_string());
        let t = &r.times;
        for v in [t.preprocess, t.view, t.contour, t.icp, t.solve, t.histogram, t.total] {
            row.push((v * 1e3).to_string());
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let poses = crate::sequence::read_poses(path)?;
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.into(),
        source,
    })?;
    let mut out = Vec::with_capacity(poses.len());
    for (i, (rec, pose)) in r.records().zip(poses).enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })?;
        if rec.len() != TRAJECTORY_HEADER.len() + 1 {
            return Err(Error::parse(path, i + 2, "unexpected column count"));
        }
        let f = |k: usize| -> Result<f64> {
            rec[k].trim().parse().map_err(|_| Error::parse(path, i + 2, "bad number"))
        };
        let mut times = [0.0; 7];
        for (k, t) in times.iter_mut().enumerate() {
            *t = f(19 + k)?;
        }
        out.push(TrajectoryRow {
            pose,
            lost: f(13)? != 0.0,
            times_ms: times,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Mean per phase: preprocess, view, contour, icp, solve, histogram.
    pub phase_mean_ms: [f64; 6],
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[k]
}

pub fn timing(rows: &[TrajectoryRow]) -> Timing {
    let n = rows.len().max(1) as f64;
    let mut total: Vec<f64> = rows.iter().map(|r| r.times_ms[6]).collect();
    total.sort_by(f64::total_cmp);
    let mut phases = [0.0; 6];
    for r in rows {
        for k in 0..6 {
            phases[k] += r.times_ms[k] / n;
        }
    }
    Timing {
        mean_ms: total.iter().sum::<f64>() / n,
        median_ms: percentile(&total, 0.5),
        p95_ms: percentile(&total, 0.95),
        phase_mean_ms: phases,
    }
}
