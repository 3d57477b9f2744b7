//! Shared helpers for the integration and acceptance tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tgrnet::metrics::GrayMap;

/// Straightforward reference implementation: a double loop per threshold.
pub struct Oracle {
    pub mae: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_max: f64,
    pub f_adaptive: f64,
}

pub fn oracle(pred: &GrayMap, gt: &GrayMap) -> Oracle {
    let (h, w) = (pred.height(), pred.width());
    let mut abs_sum = 0.0;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            abs_sum += (pred.get(y, x) - gt.get(y, x)).abs();
            sum += pred.get(y, x);
        }
    }
    let count = |thr: f64| {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                let on = pred.get(y, x) >= thr;
                let fg = gt.get(y, x) == 1.0;
                if on && fg {
                    tp += 1;
                } else if on {
                    fp += 1;
                } else if fg {
                    fn_ += 1;
                }
            }
        }
        let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = tp as f64 / (tp + fn_) as f64;
        (p, r)
    };
    let fb = |p: f64, r: f64| {
        if 0.3 * p + r == 0.0 {
            0.0
        } else {
            1.3 * p * r / (0.3 * p + r)
        }
    };
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut f_max: f64 = 0.0;
    for k in 0..256 {
        let (p, r) = count(k as f64 / 256.0);
        f_max = f_max.max(fb(p, r));
        precision.push(p);
        recall.push(r);
    }
    let thr = (2.0 * sum / (h * w) as f64).min(1.0);
    let (p, r) = count(thr);
    Oracle {
        mae: abs_sum / (h * w) as f64,
        precision,
        recall,
        f_max,
        f_adaptive: fb(p, r),
    }
}

pub fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (GrayMap, GrayMap) {
    let pred = GrayMap::from_fn(n, n, |_, _| rng.random_range(0.0..=1.0));
    let fill = rng.random_range(0.05..0.6);
    let mut gt = GrayMap::from_fn(n, n, |_, _| if rng.random_bool(fill) { 1.0 } else { 0.0 });
    if gt.foreground() == 0 {
        gt = GrayMap::from_fn(n, n, |y, x| if y == 0 && x == 0 { 1.0 } else { 0.0 });
    }
    (pred, gt)
}

