use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{aggregate, evaluate_map, SaliencyEval};
use crate::error::{Error, Result};
use crate::imageio::{is_image_path, load_gray, load_mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub name: String,
    pub mae: f64,
    pub f_beta_max: Option<f64>,
    pub f_beta_adaptive: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub images: Vec<ImageRecord>,
    pub aggregate: SaliencyEval,
    /// Files present on only one side, as `pred:<name>` or `gt:<name>`.
    pub unmatched: Vec<String>,
}

fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_image_path(&path) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Evaluates every prediction against the ground truth of the same stem.
/// A prediction named `<stem>_final` also matches ground truth `<stem>`, so
/// an inference output directory can be scored directly.
///
/// Images are processed in file-name order. When `out_dir` is given,
/// `report.json` and `report.csv` are written there.
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path, out_dir: Option<&Path>) -> Result<DatasetReport> {
    let preds = list_images(pred_dir)?;
    let gts = list_images(gt_dir)?;
    let mut unmatched = Vec::new();
    let mut used_preds = std::collections::BTreeSet::new();
    let mut images = Vec::new();
    let mut evals = Vec::new();
    for (stem, gt_path) in &gts {
        let final_name = format!("{stem}_final");
        let pred = preds
            .get_key_value(stem.as_str())
            .or_else(|| preds.get_key_value(final_name.as_str()));
        let Some((pred_stem, pred_path)) = pred else {
            unmatched.push(format!("gt:{stem}"));
            continue;
        };
        used_preds.insert(pred_stem.clone());
        let gt = load_mask(gt_path)?;
        let p = load_gray(pred_path)?;
        let eval = evaluate_map(&p, &gt).map_err(|e| Error::InvalidArgument(format!("{stem}: {e}")))?;
        images.push(ImageRecord {
            name: stem.clone(),
            mae: eval.mae,
            f_beta_max: eval.f_beta_max(),
            f_beta_adaptive: eval.f_beta_adaptive,
        });
        evals.push(eval);
    }
    for stem in preds.keys().filter(|s| !used_preds.contains(*s)) {
        unmatched.push(format!("pred:{stem}"));
    }
    for u in &unmatched {
        eprintln!("warning: unmatched file skipped: {u}");
    }
    if evals.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no matching prediction/ground-truth pairs between {} and {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    let report = DatasetReport {
        images,
        aggregate: aggregate(&evals)?,
        unmatched,
    };
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

impl DatasetReport {
    /// Writes `report.json` and `report.csv` (one row per image plus an
    /// `aggregate` row) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json_path = dir.join("report.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

        let csv_path = dir.join("report.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["name", "f_beta_max", "f_beta_adaptive", "mae"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.images {
            w.write_record([r.name.clone(), opt(r.f_beta_max), opt(r.f_beta_adaptive), r.mae.to_string()])?;
        }
        let a = &self.aggregate;
        w.write_record([
            "aggregate".to_string(),
            a.f_beta_max.to_string(),
            a.f_beta_adaptive.to_string(),
            a.mae.to_string(),
        ])?;
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        Ok(())
    }
}
