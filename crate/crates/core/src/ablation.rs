//! Grid sweeps over recurrence variant, step count and reference strategy.

use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::tgrm::{Recurrence, Reference, VariantSelector};
use crate::train::{evaluate_model, synth_dataset, train_loop, Contrast, Sample};

/// One arm of the sweep. Failed arms keep their selector and carry the error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub recurrence: Recurrence,
    pub reference: Reference,
    pub steps: usize,
    pub status: String,
    pub f_beta_max: Option<f64>,
    pub f_beta_adaptive: Option<f64>,
    pub mae: Option<f64>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

impl Serialize for Recurrence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Serialize for Reference {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Arms in grid order: recurrence, then steps, then reference.
pub fn grid(cfg: &ExperimentConfig) -> Vec<VariantSelector> {
    let a = &cfg.ablate;
    let mut out = Vec::new();
    for &recurrence in &a.recurrences {
        for &steps in &a.steps {
            for &reference in &a.references {
                out.push(VariantSelector {
                    recurrence,
                    reference,
                    steps,
                });
            }
        }
    }
    out
}

/// Training and held-out samples of the sweep.
pub fn ablation_data(cfg: &ExperimentConfig, contrast: Contrast) -> (Vec<Sample>, Vec<Sample>) {
    let d = &cfg.data;
    let train = synth_dataset(d.train_count, d.size, d.seed, contrast, 0);
    let held = synth_dataset(d.eval_count, d.size, d.seed, contrast, d.train_count);
    (train, held)
}

fn run_arm(
    cfg: &ExperimentConfig,
    selector: VariantSelector,
    train: &[Sample],
    held: &[Sample],
    dir: Option<&Path>,
) -> Result<(f64, f64, f64, f64)> {
    let mut model = cfg.model.clone();
    model.selector = selector;
    let mut tc = cfg.train.clone();
    if tc.loss_weights.as_ref().is_some_and(|w| w.len() != selector.steps + 1) {
        tc.loss_weights = None;
    }
    let out = train_loop(&model, &tc, train, dir, |_, _| {})?;
    let final_loss = out.history.last().map_or(f64::NAN, |b| b.total);
    let (eval, _) = evaluate_model(&out.net, &out.store, held, tc.batch_size, tc.precision)?;
    Ok((eval.f_beta_max, eval.f_beta_adaptive, eval.mae, final_loss))
}

/// Trains and evaluates every arm with the same seeds and data. Errors in an
/// arm are recorded in its row and the sweep continues. With `out_dir`, each
/// arm's training artefacts go to `<out_dir>/arms/<label>/` and the table to
/// `<out_dir>/ablation.csv`.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let (train, held) = ablation_data(cfg, cfg.ablate.contrast);
    let mut rows = Vec::new();
    for selector in grid(cfg) {
        let label = selector.label();
        let dir = out_dir.map(|d| d.join("arms").join(&label));
        let row = match run_arm(cfg, selector, &train, &held, dir.as_deref()) {
            Ok((f_max, f_ad, mae, loss)) => AblationRow {
                label,
                recurrence: selector.recurrence,
                reference: selector.reference,
                steps: selector.steps,
                status: "ok".into(),
                f_beta_max: Some(f_max),
                f_beta_adaptive: Some(f_ad),
                mae: Some(mae),
                final_loss: Some(loss),
                error: None,
            },
            Err(e) => AblationRow {
                label,
                recurrence: selector.recurrence,
                reference: selector.reference,
                steps: selector.steps,
                status: "failed".into(),
                f_beta_max: None,
                f_beta_adaptive: None,
                mae: None,
                final_loss: None,
                error: Some(e.to_string()),
            },
        };
        progress(&row);
        rows.push(row);
    }
    if let Some(dir) = out_dir {
        write_rows(&dir.join("ablation.csv"), &rows)?;
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[AblationRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
