//! Sequence directories: `rgb/%06d.png`, `depth/%06d.png` (16-bit
//! millimeters), `camera.json` and `gt_poses.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb as PxRgb};
use rayon::prelude::*;
use regiontrack_core::image::{DepthImage, Image, RgbImage};
use regiontrack_core::synth::{synthesize_frame, SequenceSpec};
use regiontrack_core::{Frame, PinholeCamera, RigidPose, TriangleMesh};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Meters per stored depth unit.
    pub depth_scale: f64,
}

impl CameraFile {
    pub fn new(cam: &PinholeCamera) -> Self {
        Self {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            depth_scale: 0.001,
        }
    }

    pub fn camera(&self) -> Result<PinholeCamera> {
        Ok(PinholeCamera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?)
    }
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    let raw: Vec<u8> = img.data.iter().flatten().copied().collect();
    let buf: ImageBuffer<PxRgb<u8>, _> = ImageBuffer::from_raw(img.width as u32, img.height as u32, raw).unwrap();
    buf.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.pixels().map(|p| p.0).collect();
    Ok(Image::from_vec(w as usize, h as usize, data))
}

/// 8-bit grayscale PNG of values in `[0, 1]`.
pub fn write_gray(path: &Path, img: &Image<f32>) -> Result<()> {
    let raw: Vec<u8> = img.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(img.width as u32, img.height as u32, raw).unwrap();
    buf.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// 16-bit PNG; depth is rounded to the nearest unit of `scale` meters.
pub fn write_depth(path: &Path, depth: &DepthImage, scale: f64) -> Result<()> {
    let raw: Vec<u16> = depth
        .data
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                (d as f64 / scale).round().clamp(0.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(depth.width as u32, depth.height as u32, raw).unwrap();
    buf.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

pub fn read_depth(path: &Path, scale: f64) -> Result<DepthImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    let d = img.to_luma16();
    let (w, h) = d.dimensions();
    let data = d.pixels().map(|p| (p.0[0] as f64 * scale) as f32).collect();
    Ok(Image::from_vec(w as usize, h as usize, data))
}

const POSE_HEADER: [&str; 13] = [
    "frame", "r00", "r01", "r02", "tx", "r10", "r11", "r12", "ty", "r20", "r21", "r22", "tz",
];

/// Writes `frame` plus the 12 row-major `[R | t]` values per pose. Floats use
/// the shortest representation that parses back to the same bits.
pub fn write_poses(path: &Path, poses: &[RigidPose]) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(POSE_HEADER).map_err(err)?;
    for (i, p) in poses.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.to_row_major().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads poses from the first 13 columns of a pose or trajectory CSV.
pub fn read_poses(path: &Path) -> Result<Vec<RigidPose>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.into(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })?;
        let line = i + 2;
        if rec.len() < 13 {
            return Err(Error::parse(path, line, "expected at least 13 columns"));
        }
        let frame: usize = rec[0].trim().parse().map_err(|_| Error::parse(path, line, "bad frame index"))?;
        if frame != i {
            return Err(Error::parse(path, line, "frame indices must be consecutive from 0"));
        }
        let mut v = [0.0; 12];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, "bad pose value"))?;
        }
        out.push(RigidPose::from_row_major(&v));
    }
    Ok(out)
}

/// A sequence directory on disk.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub dir: PathBuf,
    pub camera: CameraFile,
    pub n_frames: usize,
}

impl Sequence {
    pub fn open(dir: &Path) -> Result<Self> {
        let cpath = dir.join("camera.json");
        let text = fs::read_to_string(&cpath).map_err(|e| Error::io(&cpath, e))?;
        let camera: CameraFile = serde_json::from_str(&text).map_err(|source| Error::Json { path: cpath, source })?;
        camera.camera()?;
        let rgb_dir = dir.join("rgb");
        let mut n = 0;
        while rgb_dir.join(frame_name(n)).exists() {
            n += 1;
        }
        if n == 0 {
            return Err(Error::Invalid(format!("{}: no frames", rgb_dir.display())));
        }
        Ok(Self {
            dir: dir.into(),
            camera,
            n_frames: n,
        })
    }

    pub fn frame(&self, i: usize) -> Result<Frame> {
        let name = frame_name(i);
        let rgb = read_rgb(&self.dir.join("rgb").join(&name))?;
        let depth = read_depth(&self.dir.join("depth").join(&name), self.camera.depth_scale)?;
        Ok(Frame::new(rgb, depth, self.camera.camera()?)?)
    }

    pub fn ground_truth(&self) -> Result<Vec<RigidPose>> {
        read_poses(&self.dir.join("gt_poses.csv"))
    }
}

pub fn frame_name(i: usize) -> String {
    format!("{i:06}.png")
}

pub fn write_frame(dir: &Path, i: usize, frame: &Frame, depth_scale: f64) -> Result<()> {
    let name = frame_name(i);
    write_rgb(&dir.join("rgb").join(&name), &frame.rgb)?;
    write_depth(&dir.join("depth").join(&name), &frame.depth, depth_scale)
}

/// Renders `spec` into `dir`. Frames are synthesized in parallel.
pub fn generate(dir: &Path, spec: &SequenceSpec, mesh: &TriangleMesh, cam: &PinholeCamera, seed: u64) -> Result<Sequence> {
    spec.validate()?;
    for sub in ["rgb", "depth"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let camera = CameraFile::new(cam);
    let cpath = dir.join("camera.json");
    let json = serde_json::to_string_pretty(&camera).expect("camera serializes");
    fs::write(&cpath, json).map_err(|e| Error::io(&cpath, e))?;
    (0..spec.n_frames).into_par_iter().try_for_each(|i| {
        let frame = synthesize_frame(spec, mesh, cam, seed, i)?;
        write_frame(dir, i, &frame, camera.depth_scale)
    })?;
    write_poses(&dir.join("gt_poses.csv"), &spec.ground_truth())?;
    Ok(Sequence {
        dir: dir.into(),
        camera,
        n_frames: spec.n_frames,
    })
}
