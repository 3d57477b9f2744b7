//! Seeded synthetic saliency dataset: a smooth noisy background with one to
//! three filled shapes (ellipse, rectangle, triangle) as the salient objects.
//!
//! In [`Contrast::Normal`] the objects differ clearly in colour from the
//! background. In [`Contrast::Low`] the mean colour gap is below 0.1 and
//! smaller than the background's own variation, so intensity alone does not
//! separate the objects; they carry a fine stripe texture instead.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sample::Sample;
use crate::metrics::GrayMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Contrast {
    Normal,
    Low,
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Contrast::Normal => "normal",
            Contrast::Low => "low",
        })
    }
}

impl FromStr for Contrast {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normal" => Ok(Contrast::Normal),
            "low" => Ok(Contrast::Low),
            other => Err(format!("unknown contrast `{other}` (expected normal|low)")),
        }
    }
}

pub const MIN_COVERAGE: f64 = 0.05;
pub const MAX_COVERAGE: f64 = 0.6;
/// Upper bound of the mean foreground/background colour gap in low-contrast mode.
pub const LOW_CONTRAST_GAP: f64 = 0.08;

/// Seed of sample `index` under a root seed.
pub fn sample_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `first .. first + count` of the dataset rooted at `seed`.
pub fn synth_dataset(count: usize, size: usize, seed: u64, contrast: Contrast, first: usize) -> Vec<Sample> {
    (first..first + count)
        .map(|i| synth_sample(size, sample_seed(seed, i as u64), contrast))
        .collect()
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, theta: f64 },
    Rect { cy: f64, cx: f64, hy: f64, hx: f64, theta: f64 },
    Triangle { v: [(f64, f64); 3] },
}

impl Shape {
    fn random(rng: &mut impl Rng, s: f64) -> Shape {
        let cy = rng.random_range(0.2..0.8) * s;
        let cx = rng.random_range(0.2..0.8) * s;
        let theta = rng.random_range(0.0..PI);
        match rng.random_range(0..3) {
            0 => Shape::Ellipse {
                cy,
                cx,
                ry: rng.random_range(0.1..0.3) * s,
                rx: rng.random_range(0.1..0.3) * s,
                theta,
            },
            1 => Shape::Rect {
                cy,
                cx,
                hy: rng.random_range(0.08..0.26) * s,
                hx: rng.random_range(0.08..0.26) * s,
                theta,
            },
            _ => {
                let mut v = [(0.0, 0.0); 3];
                for (k, p) in v.iter_mut().enumerate() {
                    let a = theta + k as f64 * 2.0 * PI / 3.0 + rng.random_range(-0.4..0.4);
                    let r = rng.random_range(0.15..0.35) * s;
                    *p = (cy + r * a.sin(), cx + r * a.cos());
                }
                Shape::Triangle { v }
            }
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        let rot = |cy: f64, cx: f64, t: f64| {
            let (dy, dx) = (y - cy, x - cx);
            let (s, c) = t.sin_cos();
            (c * dy - s * dx, s * dy + c * dx)
        };
        match *self {
            Shape::Ellipse { cy, cx, ry, rx, theta } => {
                let (u, v) = rot(cy, cx, theta);
                (u / ry).powi(2) + (v / rx).powi(2) <= 1.0
            }
            Shape::Rect { cy, cx, hy, hx, theta } => {
                let (u, v) = rot(cy, cx, theta);
                u.abs() <= hy && v.abs() <= hx
            }
            Shape::Triangle { v } => {
                let edge = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) * (y - a.0) - (b.0 - a.0) * (x - a.1);
                let d = [edge(v[0], v[1]), edge(v[1], v[2]), edge(v[2], v[0])];
                d.iter().all(|&e| e >= 0.0) || d.iter().all(|&e| e <= 0.0)
            }
        }
    }
}

/// Smooth noise in `[-1, 1]`: a random `(cells+1)^2` lattice, bilinearly interpolated.
fn smooth_noise(rng: &mut impl Rng, size: usize, cells: usize) -> Vec<f64> {
    let n = cells + 1;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let scale = cells as f64 / (size - 1).max(1) as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = y as f64 * scale;
        let y0 = (fy.floor() as usize).min(cells - 1);
        let ty = fy - y0 as f64;
        for x in 0..size {
            let fx = x as f64 * scale;
            let x0 = (fx.floor() as usize).min(cells - 1);
            let tx = fx - x0 as f64;
            let l = |j: usize, i: usize| lattice[j * n + i];
            let top = l(y0, x0) * (1.0 - tx) + l(y0, x0 + 1) * tx;
            let bot = l(y0 + 1, x0) * (1.0 - tx) + l(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

fn draw_mask(rng: &mut impl Rng, size: usize) -> Vec<f64> {
    loop {
        let count = rng.random_range(1..=3);
        let shapes: Vec<Shape> = (0..count).map(|_| Shape::random(rng, size as f64)).collect();
        let mask: Vec<f64> = (0..size * size)
            .map(|i| {
                let (y, x) = ((i / size) as f64 + 0.5, (i % size) as f64 + 0.5);
                if shapes.iter().any(|s| s.contains(y, x)) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let coverage = mask.iter().sum::<f64>() / mask.len() as f64;
        if (MIN_COVERAGE..=MAX_COVERAGE).contains(&coverage) {
            return mask;
        }
    }
}

/// One square sample of side `size`, fully determined by `seed`.
pub fn synth_sample(size: usize, seed: u64, contrast: Contrast) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = draw_mask(&mut rng, size);
    let n = size * size;
    let (bg_amp, gap_range, fg_jitter) = match contrast {
        Contrast::Normal => (0.08, 0.3..0.5, 0.05),
        Contrast::Low => (0.15, 0.03..LOW_CONTRAST_GAP, 0.02),
    };
    let base: Vec<f64> = (0..3).map(|_| rng.random_range(0.25..0.75)).collect();
    let gap = rng.random_range(gap_range);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let fg: Vec<f64> = base
        .iter()
        .map(|&b| {
            let up = b + gap;
            let down = b - gap;
            let v = if (sign > 0.0 && up <= 1.0) || down < 0.0 { up } else { down };
            v + rng.random_range(-fg_jitter..=fg_jitter)
        })
        .collect();
    // Low-contrast objects carry an oriented stripe texture.
    let period = rng.random_range(3.0..5.0);
    let phi = rng.random_range(0.0..PI);
    let (ps, pc) = phi.sin_cos();

    let mut image = vec![0.0; 3 * n];
    for c in 0..3 {
        let bg_noise = smooth_noise(&mut rng, size, 4);
        let fg_noise = smooth_noise(&mut rng, size, 3);
        for i in 0..n {
            let bg = base[c] + bg_amp * bg_noise[i];
            let v = if mask[i] == 1.0 {
                match contrast {
                    Contrast::Normal => fg[c] + 0.04 * fg_noise[i],
                    Contrast::Low => {
                        let (y, x) = ((i / size) as f64, (i % size) as f64);
                        let stripe = (2.0 * PI * (x * pc + y * ps) / period).sin();
                        bg + (fg[c] - base[c]) + 0.12 * stripe
                    }
                }
            } else {
                bg
            };
            image[c * n + i] = v.clamp(0.0, 1.0);
        }
    }
    let saliency = GrayMap::new(size, size, mask).expect("square mask");
    Sample::new(size, size, image, saliency, seed).expect("consistent sample")
}
