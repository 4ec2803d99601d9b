//! Minimal row-major image buffers.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

pub type Rgb = [u8; 3];
pub type RgbImage = Image<Rgb>;
/// Depth in meters; `0.0` marks an invalid reading.
pub type DepthImage = Image<f32>;

impl<T: Clone> Image<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "buffer size does not match dimensions");
        Self {
            width,
            height,
            data,
        }
    }
}

impl<T: Copy> Image<T> {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Nearest pixel to a continuous coordinate, if inside the image.
    #[inline]
    pub fn at(&self, u: f64, v: f64) -> Option<T> {
        let (x, y) = self.nearest(u, v)?;
        Some(self.data[y * self.width + x])
    }

    #[inline]
    pub fn nearest(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let x = (u + 0.5).floor();
        let y = (v + 0.5).floor();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((x as usize, y as usize))
    }

    #[inline]
    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }
}

#[allow(unused_imports)]
use num_traits::Float;

/// Halves an RGB image by 2x2 averaging (odd trailing rows/columns are dropped).
pub fn downsample_rgb(img: &RgbImage) -> RgbImage {
    let (w, h) = ((img.width / 2).max(1), (img.height / 2).max(1));
    let mut out = Image::new(w, h, [0u8; 3]);
    for y in 0..h {
        let (y0, y1) = (2 * y, (2 * y + 1).min(img.height - 1));
        for x in 0..w {
            let (x0, x1) = (2 * x, (2 * x + 1).min(img.width - 1));
            let a = img.get(x0, y0);
            let b = img.get(x1, y0);
            let c = img.get(x0, y1);
            let d = img.get(x1, y1);
            let px = core::array::from_fn(|k| {
                ((a[k] as u16 + b[k] as u16 + c[k] as u16 + d[k] as u16 + 2) / 4) as u8
            });
            out.set(x, y, px);
        }
    }
    out
}

/// Halves a depth map. Each output pixel takes the lower median of the valid
/// values in its 2x2 block, so depth edges stay sharp instead of producing
/// in-between values that belong to neither surface.
pub fn downsample_depth(img: &DepthImage) -> DepthImage {
    let (w, h) = ((img.width / 2).max(1), (img.height / 2).max(1));
    let mut out = Image::new(w, h, 0.0f32);
    for y in 0..h {
        let (y0, y1) = (2 * y, (2 * y + 1).min(img.height - 1));
        for x in 0..w {
            let (x0, x1) = (2 * x, (2 * x + 1).min(img.width - 1));
            let mut v = [img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1)];
            v.sort_by(|a, b| a.total_cmp(b));
            let first = v.iter().position(|&d| d > 0.0).unwrap_or(4);
            let n = 4 - first;
            if n > 0 {
                out.set(x, y, v[first + (n - 1) / 2]);
            }
        }
    }
    out
}
