//! PNG input/output, jet colormap overlays, channel contact sheets and
//! perturbation-curve plots.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::grouping::ChannelGroup;
use crate::metrics::PerturbationCurve;
use crate::model::ActivationStack;
use crate::raster::{Grid, Image};

pub const OVERLAY_ALPHA: f64 = 0.5;

/// Reads any supported image file as RGB in [0, 1].
pub fn load_image_file(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other),
    })?;
    let rgb = img.to_rgb8();
    Image::from_rgb8(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())
}

pub fn save_rgb8(image: &Image, path: &Path) -> Result<()> {
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, image.to_rgb8()).expect("buffer size");
    buf.save(path).map_err(|e| Error::format(path, e))
}

/// 16-bit grayscale PNG; `value · 65535`, rounded.
pub fn save_saliency_png(map: &Grid, path: &Path) -> Result<()> {
    let data: Vec<u16> = map.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, data).expect("buffer size");
    buf.save(path).map_err(|e| Error::format(path, e))
}

pub fn load_saliency_png(path: &Path) -> Result<Grid> {
    let img = image::open(path).map_err(|e| Error::format(path, e))?.to_luma16();
    let data = img.as_raw().iter().map(|&v| f64::from(v) / 65535.0).collect();
    Grid::from_vec(img.height() as usize, img.width() as usize, data)
}

/// Piecewise-linear jet colormap for `v ∈ [0, 1]`.
pub fn jet(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let channel = |center: f64| ((1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [channel(3.0), channel(2.0), channel(1.0)]
}

/// Jet-coloured saliency alpha-blended over the image.
pub fn overlay(image: &Image, saliency: &Grid, alpha: f64) -> Result<RgbImage> {
    if saliency.shape() != (image.height, image.width) {
        return Err(Error::input("saliency and image sizes differ"));
    }
    let rgb = image.to_rgb8();
    let mut out = RgbImage::new(image.width as u32, image.height as u32);
    for (p, px) in out.pixels_mut().enumerate() {
        let heat = jet(saliency.data[p]);
        for c in 0..3 {
            let base = f64::from(rgb[3 * p + c]);
            px.0[c] = ((1.0 - alpha) * base + alpha * f64::from(heat[c])).round() as u8;
        }
    }
    Ok(out)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::format(path, e))
}

/// One row of tiles: the anchor channel (red frame) followed by the other
/// group members, each min-max scaled and enlarged `scale`×.
pub fn contact_sheet(acts: &ActivationStack, group: &ChannelGroup, scale: usize) -> RgbImage {
    let pad = 2;
    let tile_w = acts.width * scale;
    let tile_h = acts.height * scale;
    let order: Vec<usize> =
        std::iter::once(group.anchor).chain(group.members.iter().copied().filter(|&m| m != group.anchor)).collect();
    let width = order.len() * (tile_w + pad) + pad;
    let height = tile_h + 2 * pad;
    let mut sheet = RgbImage::from_pixel(width as u32, height as u32, Rgb([40, 40, 40]));
    for (slot, &k) in order.iter().enumerate() {
        let x0 = pad + slot * (tile_w + pad);
        let tile = acts.channel_map(k).min_max_normalized();
        for y in 0..tile_h {
            for x in 0..tile_w {
                let v = (tile.get(y / scale, x / scale) * 255.0).round() as u8;
                sheet.put_pixel((x0 + x) as u32, (pad + y) as u32, Rgb([v, v, v]));
            }
        }
        if slot == 0 {
            for x in x0.saturating_sub(1)..(x0 + tile_w + 1).min(width) {
                sheet.put_pixel(x as u32, (pad - 1) as u32, Rgb([220, 30, 30]));
                sheet.put_pixel(x as u32, (pad + tile_h) as u32, Rgb([220, 30, 30]));
            }
            for y in pad - 1..=pad + tile_h {
                sheet.put_pixel((x0 - 1) as u32, y as u32, Rgb([220, 30, 30]));
                sheet.put_pixel((x0 + tile_w).min(width - 1) as u32, y as u32, Rgb([220, 30, 30]));
            }
        }
    }
    sheet
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Score-vs-fraction plot; deletion in blue, insertion in red, axes in
/// black, both axes spanning [0, 1].
pub fn plot_curves(curves: &[&PerturbationCurve]) -> RgbImage {
    let (w, h, margin) = (320i64, 240i64, 24i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb([255, 255, 255]));
    let to_px = |f: f64, s: f64| {
        let x = margin + (f.clamp(0.0, 1.0) * (w - 2 * margin) as f64).round() as i64;
        let y = h - margin - (s.clamp(0.0, 1.0) * (h - 2 * margin) as f64).round() as i64;
        (x, y)
    };
    let black = Rgb([0, 0, 0]);
    draw_line(&mut img, to_px(0.0, 0.0), to_px(1.0, 0.0), black);
    draw_line(&mut img, to_px(0.0, 0.0), to_px(0.0, 1.0), black);
    for curve in curves {
        let color = match curve.direction {
            crate::metrics::Direction::Deletion => Rgb([30, 60, 220]),
            crate::metrics::Direction::Insertion => Rgb([220, 40, 30]),
        };
        for (f, s) in curve.fractions.windows(2).zip(curve.scores.windows(2)) {
            draw_line(&mut img, to_px(f[0], s[0]), to_px(f[1], s[1]), color);
        }
    }
    img
}
