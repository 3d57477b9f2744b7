//! PNG / PGM / PPM reading and writing. Format is chosen from the extension.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::metrics::GrayMap;

/// Loads any supported image as grayscale in `[0, 1]`.
pub fn load_gray(path: &Path) -> Result<GrayMap> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
    GrayMap::new(h as usize, w as usize, data)
}

/// Loads a binary mask: any pixel at or above half intensity becomes 1.
pub fn load_mask(path: &Path) -> Result<GrayMap> {
    let m = load_gray(path)?;
    let (h, w) = (m.height(), m.width());
    let data = m.into_data().into_iter().map(|v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
    GrayMap::new(h, w, data)
}

/// Loads an RGB image as planar `[3 * H * W]` values in `[0, 1]`, returning `(h, w, planes)`.
pub fn load_rgb(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut planes = vec![0.0; 3 * h * w];
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            planes[c * h * w + y as usize * w + x as usize] = p.0[c] as f64 / 255.0;
        }
    }
    Ok((h, w, planes))
}

/// 8-bit quantisation used by every writer: `round(255 * clamp(v, 0, 1))`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_gray(path: &Path, map: &GrayMap) -> Result<()> {
    let mut img = GrayImage::new(map.width() as u32, map.height() as u32);
    for (i, v) in map.data().iter().enumerate() {
        let (y, x) = (i / map.width(), i % map.width());
        img.put_pixel(x as u32, y as u32, Luma([quantize(*v)]));
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes planar RGB values in `[0, 1]`.
pub fn save_rgb(path: &Path, h: usize, w: usize, planes: &[f64]) -> Result<()> {
    if planes.len() != 3 * h * w {
        return Err(Error::shape("save_rgb", format!("expected {} values, got {}", 3 * h * w, planes.len())));
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = |c: usize| quantize(planes[c * h * w + y * w + x]);
            img.put_pixel(x as u32, y as u32, Rgb([px(0), px(1), px(2)]));
        }
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}
