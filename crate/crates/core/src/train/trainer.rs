use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, AugmentParams};
use super::loss::{total_loss, LossBreakdown, LossOptions};
use super::optim::Sgd;
use super::sample::{Sample, SampleBatch};
use super::synth::sample_seed;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_map, GrayMap, ImageEval, SaliencyEval};
use crate::params::ParamStore;
use crate::tensor::{Graph, Precision, Tensor};
use crate::tgrm::{ModelConfig, SaliencyNet};

const INIT_STREAM: u64 = 0x1217;
const ORDER_STREAM: u64 = 0x0BDE;
const AUGMENT_STREAM: u64 = 0xA06E;

/// Derives an independent seed for one purpose from the root seed.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    sample_seed(sample_seed(root, stream), index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Per-step loss weights; `None` means 1 for every step.
    pub loss_weights: Option<Vec<f64>>,
    pub boundary_pos_weight: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    pub augment: bool,
    /// Write `ckpt_<iter>.ckpt` every this many iterations (0 = never).
    pub checkpoint_every: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 3000,
            batch_size: 8,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.001,
            loss_weights: None,
            boundary_pos_weight: 1.0,
            grad_clip: 5.0,
            augment: true,
            checkpoint_every: 1000,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self, steps: usize) -> Result<Vec<f64>> {
        match &self.loss_weights {
            None => Ok(vec![1.0; steps + 1]),
            Some(w) if w.len() == steps + 1 => Ok(w.clone()),
            Some(w) => Err(Error::InvalidArgument(format!(
                "{} loss weights given for {} maps",
                w.len(),
                steps + 1
            ))),
        }
    }
}

pub struct TrainOutcome {
    pub net: SaliencyNet,
    pub store: ParamStore,
    pub history: Vec<LossBreakdown>,
}

/// Builds the network with its seeded initial parameters.
pub fn init_model(model: &ModelConfig, seed: u64) -> (SaliencyNet, ParamStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM, 0));
    SaliencyNet::new(model.clone(), &mut rng)
}

/// One forward/backward/update on `batch`. Returns the loss terms and the
/// gradient norm before clipping.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    net: &SaliencyNet,
    store: &mut ParamStore,
    opt: &mut Sgd,
    batch: &SampleBatch,
    weights: &[f64],
    loss_opts: LossOptions,
    precision: Precision,
) -> Result<(LossBreakdown, f64)> {
    let mut g = Graph::new(precision);
    let bound = store.bind(&mut g, true);
    let image = g.constant(batch.images.clone());
    let sal = g.constant(batch.saliency_gt.clone());
    let bnd = g.constant(batch.boundary_gt.clone());
    let maps = net.forward(&mut g, &bound, image)?;
    let loss = total_loss(&mut g, &maps, sal, bnd, weights, loss_opts)?;
    let breakdown = loss.breakdown(&g);
    g.backward(loss.total)?;
    let grads: Vec<Option<&[f64]>> = bound.ids().iter().map(|&id| g.grad(id)).collect();
    let norm = opt.step(store, &grads)?;
    Ok((breakdown, norm))
}

fn csv_header(steps: usize) -> String {
    let mut cols = vec!["iter".to_string()];
    cols.extend((0..=steps).map(|i| format!("l_s_{i}")));
    cols.extend((0..=steps).map(|i| format!("l_b_{i}")));
    cols.push("total".into());
    cols.push("grad_norm".into());
    cols.join(",")
}

fn csv_row(iter: usize, b: &LossBreakdown, grad_norm: f64) -> String {
    let mut cols = vec![iter.to_string()];
    cols.extend(b.l_s.iter().map(f64::to_string));
    cols.extend(b.l_b.iter().map(f64::to_string));
    cols.push(b.total.to_string());
    cols.push(grad_norm.to_string());
    cols.join(",")
}

/// Iteration `iter`'s batch: consecutive slices of a per-epoch shuffle.
fn batch_indices(n: usize, batch: usize, iter: usize, seed: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch);
    let mut pos = iter * batch;
    let mut epoch = usize::MAX;
    let mut order: Vec<usize> = Vec::new();
    while out.len() < batch {
        let e = pos / n;
        if e != epoch {
            epoch = e;
            order = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, ORDER_STREAM, e as u64)));
        }
        out.push(order[pos % n]);
        pos += 1;
    }
    out
}

/// Trains from a fresh seeded initialisation.
///
/// With `out_dir` set, writes `loss.csv` (one row per iteration),
/// `ckpt_<iter>.ckpt` at the configured interval and `final.ckpt`. A
/// non-finite loss or gradient aborts the run after saving the parameters
/// from before the failing step as `last_good.ckpt`.
pub fn train_loop(
    model: &ModelConfig,
    cfg: &TrainConfig,
    data: &[Sample],
    out_dir: Option<&Path>,
    mut progress: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainOutcome> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("training needs data and a positive batch size".into()));
    }
    let weights = cfg.weights(model.selector.steps)?;
    let (net, mut store) = init_model(model, cfg.seed);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay).with_clip_norm(cfg.grad_clip);
    let loss_opts = LossOptions {
        boundary_pos_weight: cfg.boundary_pos_weight,
        ..LossOptions::default()
    };
    let aug = AugmentParams::default();

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("loss.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(w, "{}", csv_header(model.selector.steps)).map_err(|e| Error::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };

    let mut history = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let idx = batch_indices(data.len(), cfg.batch_size, iter, cfg.seed);
        let augmented: Vec<Sample>;
        let refs: Vec<&Sample> = if cfg.augment {
            augmented = idx
                .iter()
                .enumerate()
                .map(|(slot, &i)| {
                    let s = derive_seed(cfg.seed, AUGMENT_STREAM, (iter * cfg.batch_size + slot) as u64);
                    augment(&data[i], &aug, &mut ChaCha8Rng::seed_from_u64(s))
                })
                .collect();
            augmented.iter().collect()
        } else {
            idx.iter().map(|&i| &data[i]).collect()
        };
        let batch = SampleBatch::stack(&refs)?;
        let result = train_step(&net, &mut store, &mut opt, &batch, &weights, loss_opts, cfg.precision);
        let (breakdown, grad_norm) = match result {
            Ok((b, n)) if b.total.is_finite() => (b, n),
            Ok(_) | Err(Error::NonFinite { .. }) | Err(Error::NonFiniteGradient(_)) => {
                if let Some(dir) = out_dir {
                    store.save(&dir.join("last_good.ckpt"))?;
                }
                return Err(Error::NonFiniteLoss { iter: iter + 1 });
            }
            Err(e) => return Err(e),
        };
        if let Some((w, path)) = log.as_mut() {
            writeln!(w, "{}", csv_row(iter + 1, &breakdown, grad_norm)).map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
                store.save(&dir.join(format!("ckpt_{}.ckpt", iter + 1)))?;
            }
        }
        progress(iter + 1, &breakdown);
        history.push(breakdown);
    }
    if let Some((mut w, path)) = log {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    if let Some(dir) = out_dir {
        store.save(&dir.join("final.ckpt"))?;
    }
    Ok(TrainOutcome { net, store, history })
}

/// Per-step maps of a batch of images, `maps[step][image]`.
pub struct Prediction {
    pub saliency: Vec<Vec<GrayMap>>,
    pub boundary: Vec<Option<Vec<GrayMap>>>,
}

fn split_maps(t: &Tensor) -> Vec<GrayMap> {
    let (n, _, h, w) = t.dims4().expect("4-d map");
    (0..n)
        .map(|i| GrayMap::new(h, w, t.data()[i * h * w..(i + 1) * h * w].to_vec()).expect("plane"))
        .collect()
}

/// Runs the network without gradient tracking.
pub fn predict(net: &SaliencyNet, store: &ParamStore, images: &Tensor, precision: Precision) -> Result<Prediction> {
    let mut g = Graph::new(precision);
    let bound = store.bind(&mut g, false);
    let image = g.constant(images.clone());
    let maps = net.forward(&mut g, &bound, image)?;
    Ok(Prediction {
        saliency: maps.iter().map(|m| split_maps(g.value(m.saliency))).collect(),
        boundary: maps.iter().map(|m| m.boundary.map(|b| split_maps(g.value(b)))).collect(),
    })
}

/// Scores the final-step saliency map of every sample.
pub fn evaluate_model(
    net: &SaliencyNet,
    store: &ParamStore,
    samples: &[Sample],
    batch_size: usize,
    precision: Precision,
) -> Result<(SaliencyEval, Vec<ImageEval>)> {
    let mut evals = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = SampleBatch::stack(&refs)?;
        let pred = predict(net, store, &batch.images, precision)?;
        let finals = pred.saliency.last().expect("at least one map");
        for (p, s) in finals.iter().zip(chunk) {
            evals.push(evaluate_map(p, &s.saliency)?);
        }
    }
    Ok((aggregate(&evals)?, evals))
}

/// Where `train_loop` writes its final parameters.
pub fn final_checkpoint(out_dir: &Path) -> PathBuf {
    out_dir.join("final.ckpt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::EncoderConfig;
    use crate::train::synth::{synth_dataset, Contrast};
    use crate::tgrm::{Recurrence, Reference, VariantSelector};

    fn tiny_model(steps: usize) -> ModelConfig {
        ModelConfig {
            guide_width: 4,
            encoder: EncoderConfig {
                channels: [4, 4, 8, 8],
                strides: [1, 2, 2, 2],
            },
            selector: VariantSelector {
                recurrence: Recurrence::Tgrm,
                reference: Reference::Low,
                steps,
            },
            ..ModelConfig::default()
        }
    }

    fn tiny_train(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 2,
            lr: 0.01,
            checkpoint_every: 0,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut seen: Vec<usize> = (0..5).flat_map(|i| batch_indices(10, 2, i, 1)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let data = synth_dataset(2, 16, 1, Contrast::Normal, 0);
        let cfg = TrainConfig {
            lr: 0.0,
            augment: false,
            ..tiny_train(3)
        };
        let out = train_loop(&tiny_model(1), &cfg, &data, None, |_, _| {}).unwrap();
        let t0 = out.history[0].total;
        for b in &out.history {
            assert!((b.total - t0).abs() < 1e-12);
        }
    }

    #[test]
    fn logged_total_matches_components() {
        let data = synth_dataset(4, 16, 2, Contrast::Normal, 0);
        let dir = tempfile::tempdir().unwrap();
        let out = train_loop(&tiny_model(2), &tiny_train(3), &data, Some(dir.path()), |_, _| {}).unwrap();
        for b in &out.history {
            assert!((b.total - b.weighted_sum()).abs() <= 1e-12);
            assert_eq!(b.steps(), 3);
        }
        let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iter,l_s_0,l_s_1,l_s_2,l_b_0,l_b_1,l_b_2,total,grad_norm");
        assert_eq!(lines.count(), 3);
        assert!(final_checkpoint(dir.path()).exists());
    }

    #[test]
    fn diverging_run_dumps_last_good_checkpoint() {
        let data = synth_dataset(2, 16, 2, Contrast::Normal, 0);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            lr: 1e12,
            ..tiny_train(20)
        };
        let err = train_loop(&tiny_model(1), &cfg, &data, Some(dir.path()), |_, _| {});
        assert!(matches!(err, Err(Error::NonFiniteLoss { .. })), "{:?}", err.err());
        assert!(dir.path().join("last_good.ckpt").exists());
    }
}
