use rand::Rng;

use super::sample::Sample;
use crate::metrics::GrayMap;
use crate::tensor::kernels::{bilinear_taps, resize_plane};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip_prob: f64,
    /// Rotation angle is drawn uniformly from `[-max, max]` degrees.
    pub max_rotation_deg: f64,
    /// Side length of the random crop relative to the image.
    pub crop_fraction: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            flip_prob: 0.5,
            max_rotation_deg: 10.0,
            crop_fraction: 0.875,
        }
    }
}

/// Concrete transform drawn for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub angle_deg: f64,
    pub crop_y: usize,
    pub crop_x: usize,
    pub crop_h: usize,
    pub crop_w: usize,
}

impl AugmentDraw {
    pub fn identity(height: usize, width: usize) -> Self {
        AugmentDraw {
            flip: false,
            angle_deg: 0.0,
            crop_y: 0,
            crop_x: 0,
            crop_h: height,
            crop_w: width,
        }
    }

    pub fn sample(params: &AugmentParams, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let flip = rng.random::<f64>() < params.flip_prob;
        let angle_deg = if params.max_rotation_deg > 0.0 {
            rng.random_range(-params.max_rotation_deg..=params.max_rotation_deg)
        } else {
            0.0
        };
        let crop_h = ((height as f64 * params.crop_fraction).round() as usize).clamp(1, height);
        let crop_w = ((width as f64 * params.crop_fraction).round() as usize).clamp(1, width);
        let crop_y = rng.random_range(0..=height - crop_h);
        let crop_x = rng.random_range(0..=width - crop_w);
        AugmentDraw {
            flip,
            angle_deg,
            crop_y,
            crop_x,
            crop_h,
            crop_w,
        }
    }
}

/// Randomly flips, rotates and crops a sample, then regenerates its boundary.
pub fn augment(sample: &Sample, params: &AugmentParams, rng: &mut impl Rng) -> Sample {
    let draw = AugmentDraw::sample(params, sample.height, sample.width, rng);
    apply(sample, &draw)
}

/// Applies a fixed transform: horizontal flip, rotation about the centre
/// (bilinear for the image, nearest for the mask), then a crop resized back
/// to full size (bilinear, mask re-binarised at 0.5).
pub fn apply(sample: &Sample, draw: &AugmentDraw) -> Sample {
    let (h, w) = (sample.height, sample.width);
    let mut planes: Vec<Vec<f64>> = (0..3).map(|c| sample.plane(c).to_vec()).collect();
    let mut mask = sample.saliency.data().to_vec();

    if draw.flip {
        for p in planes.iter_mut().chain(std::iter::once(&mut mask)) {
            for row in p.chunks_mut(w) {
                row.reverse();
            }
        }
    }
    if draw.angle_deg != 0.0 {
        for p in planes.iter_mut() {
            *p = rotate(p, h, w, draw.angle_deg, false);
        }
        mask = rotate(&mask, h, w, draw.angle_deg, true);
    }
    if (draw.crop_h, draw.crop_w) != (h, w) {
        for p in planes.iter_mut() {
            *p = crop_resize(p, h, w, draw);
        }
        mask = crop_resize(&mask, h, w, draw);
    }
    for v in mask.iter_mut() {
        *v = if *v >= 0.5 { 1.0 } else { 0.0 };
    }
    let image = planes.concat();
    let saliency = GrayMap::new(h, w, mask).expect("mask size preserved");
    Sample::new(h, w, image, saliency, sample.seed).expect("augmented mask is binary")
}

/// Rotates a plane about its centre; samples outside the frame take the
/// nearest edge value.
fn rotate(src: &[f64], h: usize, w: usize, angle_deg: f64, nearest: bool) -> Vec<f64> {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let at = |y: usize, x: usize| src[y * w + x];
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sy = (cos * dy - sin * dx + cy).clamp(0.0, (h - 1) as f64);
            let sx = (sin * dy + cos * dx + cx).clamp(0.0, (w - 1) as f64);
            out[y * w + x] = if nearest {
                at(sy.round() as usize, sx.round() as usize)
            } else {
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                top * (1.0 - fy) + bot * fy
            };
        }
    }
    out
}

fn crop_resize(src: &[f64], h: usize, w: usize, d: &AugmentDraw) -> Vec<f64> {
    let mut crop = Vec::with_capacity(d.crop_h * d.crop_w);
    for y in d.crop_y..d.crop_y + d.crop_h {
        crop.extend_from_slice(&src[y * w + d.crop_x..y * w + d.crop_x + d.crop_w]);
    }
    let rows = bilinear_taps(d.crop_h, h);
    let cols = bilinear_taps(d.crop_w, w);
    let mut out = vec![0.0; h * w];
    resize_plane(&crop, d.crop_w, &rows, &cols, &mut out);
    out
}
