//! Saliency evaluation: MAE, F-measure, precision/recall curves and boundary
//! ground-truth extraction.
//!
//! Conventions shared by every function here:
//! - A map is binarised as `pred >= threshold`.
//! - PR curves use the 256 thresholds `k / 256`, `k = 0..=255`.
//! - Precision is defined as 1 when nothing is predicted positive.
//! - Images whose ground truth has no foreground have undefined recall; they
//!   are left out of PR / F-measure aggregation but still count towards MAE.
//! - Both the max-over-thresholds F-measure and the adaptive one (threshold
//!   `min(2 * mean(pred), 1)`) are reported.

mod boundary;
mod report;

pub use boundary::{dilate_cross, erode_cross, extract_boundary};
pub use report::{evaluate_dataset, DatasetReport, ImageRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// β² of the F-measure.
pub const BETA2: f64 = 0.3;
/// Number of PR thresholds.
pub const THRESHOLDS: usize = 256;

/// Threshold `k` of the PR curve.
pub fn threshold(k: usize) -> f64 {
    k as f64 / THRESHOLDS as f64
}

/// A single-channel map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height * width != data.len() || height == 0 || width == 0 {
            return Err(Error::shape(
                "map",
                format!("{height}x{width} map needs {} values, got {}", height * width, data.len()),
            ));
        }
        Ok(GrayMap { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        GrayMap {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        GrayMap { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    fn same_shape(&self, other: &GrayMap, op: &'static str) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", self.height, self.width, other.height, other.width),
            ));
        }
        Ok(())
    }
}

fn require_binary(gt: &GrayMap, op: &'static str) -> Result<()> {
    if gt.is_binary() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{op}: ground truth must be binary (0/1)")))
    }
}

fn require_unit(pred: &GrayMap, op: &'static str) -> Result<()> {
    if pred.data.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{op}: prediction values must lie in [0, 1]")))
    }
}

/// Mean absolute error over all pixels.
pub fn mae(pred: &GrayMap, gt: &GrayMap) -> Result<f64> {
    pred.same_shape(gt, "mae")?;
    let sum: f64 = pred.data.iter().zip(&gt.data).map(|(p, y)| (p - y).abs()).sum();
    Ok(sum / pred.data.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Precision, or 1 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// Recall, or `None` when the ground truth has no positives.
    pub fn recall(&self) -> Option<f64> {
        (self.tp + self.fn_ > 0).then(|| self.tp as f64 / (self.tp + self.fn_) as f64)
    }
}

/// Confusion counts of `pred >= threshold` against a binary ground truth.
pub fn confusion(pred: &GrayMap, gt: &GrayMap, threshold: f64) -> Result<ConfusionCounts> {
    pred.same_shape(gt, "confusion")?;
    require_binary(gt, "confusion")?;
    let mut c = ConfusionCounts::default();
    for (&p, &y) in pred.data.iter().zip(&gt.data) {
        match (p >= threshold, y == 1.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// Confusion counts at all 256 thresholds in one pass.
pub fn confusion_curve(pred: &GrayMap, gt: &GrayMap) -> Result<Vec<ConfusionCounts>> {
    pred.same_shape(gt, "pr_curve")?;
    require_binary(gt, "pr_curve")?;
    require_unit(pred, "pr_curve")?;
    // p >= k/256  <=>  floor(256 p) >= k, exact since 256 is a power of two.
    let mut fg_hist = [0u64; THRESHOLDS];
    let mut bg_hist = [0u64; THRESHOLDS];
    for (&p, &y) in pred.data.iter().zip(&gt.data) {
        let bin = ((p * THRESHOLDS as f64).floor() as usize).min(THRESHOLDS - 1);
        if y == 1.0 {
            fg_hist[bin] += 1;
        } else {
            bg_hist[bin] += 1;
        }
    }
    let positives: u64 = fg_hist.iter().sum();
    let negatives: u64 = bg_hist.iter().sum();
    let mut out = vec![ConfusionCounts::default(); THRESHOLDS];
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..THRESHOLDS).rev() {
        tp += fg_hist[k];
        fp += bg_hist[k];
        out[k] = ConfusionCounts {
            tp,
            fp,
            fn_: positives - tp,
            tn: negatives - fp,
        };
    }
    Ok(out)
}

/// Precision/recall at the 256 thresholds, or `None` if `gt` has no foreground.
pub fn pr_curve(pred: &GrayMap, gt: &GrayMap) -> Result<Option<Vec<PrPoint>>> {
    let curve = confusion_curve(pred, gt)?;
    if curve[0].tp + curve[0].fn_ == 0 {
        return Ok(None);
    }
    Ok(Some(
        curve
            .iter()
            .map(|c| PrPoint {
                precision: c.precision(),
                recall: c.recall().expect("foreground present"),
            })
            .collect(),
    ))
}

/// `min(2 * mean(pred), 1)`.
pub fn adaptive_threshold(pred: &GrayMap) -> f64 {
    (2.0 * pred.mean()).min(1.0)
}

/// Per-image evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEval {
    pub mae: f64,
    /// `None` when the ground truth is empty.
    pub pr_curve: Option<Vec<PrPoint>>,
    pub f_beta_adaptive: Option<f64>,
}

impl ImageEval {
    pub fn f_beta_max(&self) -> Option<f64> {
        self.pr_curve
            .as_ref()
            .map(|c| c.iter().map(|p| f_beta(p.precision, p.recall, BETA2)).fold(0.0, f64::max))
    }
}

pub fn evaluate_map(pred: &GrayMap, gt: &GrayMap) -> Result<ImageEval> {
    let mae = mae(pred, gt)?;
    let pr_curve = pr_curve(pred, gt)?;
    let f_beta_adaptive = match pr_curve {
        Some(_) => {
            let c = confusion(pred, gt, adaptive_threshold(pred))?;
            Some(f_beta(c.precision(), c.recall().expect("foreground present"), BETA2))
        }
        None => None,
    };
    Ok(ImageEval {
        mae,
        pr_curve,
        f_beta_adaptive,
    })
}

/// Dataset-level summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyEval {
    /// Max over thresholds of F_β computed from dataset-mean precision and recall.
    pub f_beta_max: f64,
    /// Mean of per-image adaptive-threshold F_β.
    pub f_beta_adaptive: f64,
    /// Mean of per-image MAE.
    pub mae: f64,
    /// Dataset-mean (precision, recall) at each threshold `k / 256`.
    pub pr_curve: Vec<PrPoint>,
}

/// Aggregates per-image results. Fails if no image has foreground.
pub fn aggregate(evals: &[ImageEval]) -> Result<SaliencyEval> {
    if evals.is_empty() {
        return Err(Error::InvalidArgument("aggregate: no images".into()));
    }
    let mae = evals.iter().map(|e| e.mae).sum::<f64>() / evals.len() as f64;
    let curves: Vec<&Vec<PrPoint>> = evals.iter().filter_map(|e| e.pr_curve.as_ref()).collect();
    if curves.is_empty() {
        return Err(Error::InvalidArgument(
            "aggregate: no image has ground-truth foreground".into(),
        ));
    }
    let n = curves.len() as f64;
    let pr_curve: Vec<PrPoint> = (0..THRESHOLDS)
        .map(|k| PrPoint {
            precision: curves.iter().map(|c| c[k].precision).sum::<f64>() / n,
            recall: curves.iter().map(|c| c[k].recall).sum::<f64>() / n,
        })
        .collect();
    let f_beta_max = pr_curve
        .iter()
        .map(|p| f_beta(p.precision, p.recall, BETA2))
        .fold(0.0, f64::max);
    let adaptive: Vec<f64> = evals.iter().filter_map(|e| e.f_beta_adaptive).collect();
    let f_beta_adaptive = adaptive.iter().sum::<f64>() / adaptive.len() as f64;
    Ok(SaliencyEval {
        f_beta_max,
        f_beta_adaptive,
        mae,
        pr_curve,
    })
}
