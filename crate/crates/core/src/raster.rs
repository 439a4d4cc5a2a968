//! Dense image and map containers plus the resampling and blurring used
//! by the CAM and metric code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-channel `height × width` real map stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Grid { height, width, data: vec![0.0; height * width] }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Grid { height, width, data: vec![value; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::input(format!(
                "grid data has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        Ok(Grid { height, width, data })
    }

    /// Builds a grid from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::input("ragged rows"));
        }
        Ok(Grid { height, width, data: rows.iter().flat_map(|r| r.iter().copied()).collect() })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Index of the largest value; ties resolve to the smallest row-major index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    /// Linear rescale to [0, 1]. Degenerate (constant) grids become all zeros.
    pub fn min_max_normalized(&self) -> Grid {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let data = if !(span > 1e-12) {
            vec![0.0; self.data.len()]
        } else {
            self.data.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
        };
        Grid { height: self.height, width: self.width, data }
    }

    /// Bilinear resampling with corner-aligned sample positions: output
    /// corners land exactly on input corners.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Grid {
        resize_plane(&self.data, self.height, self.width, out_h, out_w)
    }
}

fn axis_coords(out: usize, inp: usize) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|o| {
            if out == 1 || inp == 1 {
                return (0, 0, 0.0);
            }
            let src = o as f64 * (inp - 1) as f64 / (out - 1) as f64;
            let lo = (src.floor() as usize).min(inp - 1);
            let hi = (lo + 1).min(inp - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn resize_plane(data: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Grid {
    let ys = axis_coords(out_h, h);
    let xs = axis_coords(out_w, w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
            let bottom = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Grid { height: out_h, width: out_w, data: out }
}

/// Planar RGB image, `3 × height × width`, nominal range [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn zeros(height: usize, width: usize) -> Self {
        Image { height, width, data: vec![0.0; 3 * height * width] }
    }

    pub fn from_planar(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::input(format!(
                "image data has {} values, expected 3x{height}x{width}",
                data.len()
            )));
        }
        Ok(Image { height, width, data })
    }

    /// Converts interleaved 8-bit RGB into a planar [0, 1] image.
    pub fn from_rgb8(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * height * width {
            return Err(Error::input("rgb buffer size does not match dimensions"));
        }
        let plane = height * width;
        let mut data = vec![0.0; 3 * plane];
        for (p, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + p] = f64::from(px[c]) / 255.0;
            }
        }
        Ok(Image { height, width, data })
    }

    /// Interleaved 8-bit RGB, clamping to [0, 1] before quantizing.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.pixel_count();
        let mut out = Vec::with_capacity(3 * plane);
        for p in 0..plane {
            for c in 0..3 {
                out.push((self.data[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    /// Copies every color plane of pixel `p` (row-major index) from `src`.
    pub fn copy_pixel_from(&mut self, src: &Image, p: usize) {
        let n = self.pixel_count();
        for c in 0..3 {
            self.data[c * n + p] = src.data[c * n + p];
        }
    }

    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Image {
        let mut data = Vec::with_capacity(3 * out_h * out_w);
        for c in 0..3 {
            data.extend(resize_plane(self.plane(c), self.height, self.width, out_h, out_w).data);
        }
        Image { height: out_h, width: out_w, data }
    }

    /// Separable Gaussian blur of every color plane with edge replication.
    pub fn gaussian_blur(&self, kernel_size: usize, sigma: f64) -> Result<Image> {
        if kernel_size == 0 || kernel_size % 2 == 0 {
            return Err(Error::input("blur kernel size must be odd"));
        }
        if !(sigma > 0.0) {
            return Err(Error::input("blur sigma must be positive"));
        }
        let kernel = gaussian_kernel(kernel_size, sigma);
        let radius = (kernel_size / 2) as isize;
        let (h, w) = (self.height, self.width);
        let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..3 {
            let src = self.plane(c);
            let mut tmp = vec![0.0; h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (t, kv) in kernel.iter().enumerate() {
                        acc += kv * src[y * w + clamp(x as isize + t as isize - radius, w)];
                    }
                    tmp[y * w + x] = acc;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (t, kv) in kernel.iter().enumerate() {
                        acc += kv * tmp[clamp(y as isize + t as isize - radius, h) * w + x];
                    }
                    data.push(acc);
                }
            }
        }
        Ok(Image { height: h, width: w, data })
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}
