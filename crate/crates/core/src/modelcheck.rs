//! Finite-difference checks of every graph op and of a complete tiny model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::EncoderConfig;
use crate::error::Result;
use crate::params::{Bound, Init};
use crate::tensor::{gradcheck, GradcheckReport, Tensor};
use crate::tgrm::{ModelConfig, Recurrence, Reference, SaliencyNet, VariantSelector};
use crate::train::{synth_sample, total_loss, Contrast, LossOptions, SampleBatch};

pub const STEP: f64 = 1e-5;
pub const OP_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// The tiny configuration: 16x16 input, guide width 4, one refinement step.
pub fn tiny_config(recurrence: Recurrence) -> ModelConfig {
    ModelConfig {
        guide_width: 4,
        encoder: EncoderConfig {
            channels: [4, 4, 8, 8],
            strides: [1, 2, 2, 2],
        },
        selector: VariantSelector {
            recurrence,
            reference: Reference::Low,
            steps: 1,
        },
        share_stream_params: false,
        init: Init::He,
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Gradchecks the whole network plus the two-stream loss on a batch of two
/// synthetic 16x16 samples. Biases are randomised so that no ReLU sits
/// exactly at its kink.
pub fn model_gradcheck(recurrence: Recurrence, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (net, mut store) = SaliencyNet::new(tiny_config(recurrence), &mut rng);
    for (name, t) in store.iter_mut() {
        if name.ends_with(".bias") {
            for v in t.data_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    }
    let samples = [
        synth_sample(16, rng.random(), Contrast::Normal),
        synth_sample(16, rng.random(), Contrast::Normal),
    ];
    let batch = SampleBatch::stack(&[&samples[0], &samples[1]])?;
    let weights = vec![1.0; net.config.selector.steps + 1];
    gradcheck(
        |g, ids| {
            let bound = Bound::from_ids(ids.to_vec());
            let image = g.constant(batch.images.clone());
            let sal = g.constant(batch.saliency_gt.clone());
            let bnd = g.constant(batch.boundary_gt.clone());
            let maps = net.forward(g, &bound, image)?;
            Ok(total_loss(g, &maps, sal, bnd, &weights, LossOptions::default())?.total)
        },
        store.tensors(),
        STEP,
        MODEL_TOLERANCE,
    )
}

/// Gradchecks each differentiable op on small random inputs. Each builder
/// reduces the op output to a scalar through a fixed random projection.
pub fn op_gradchecks(seed: u64) -> Result<Vec<(&'static str, GradcheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let proj = |shape: &[usize], rng: &mut ChaCha8Rng| random(shape, rng);

    let x = random(&[2, 3, 5, 5], &mut rng);
    let w = random(&[4, 3, 3, 3], &mut rng);
    let b = random(&[4], &mut rng);
    let p = proj(&[2, 4, 5, 5], &mut rng);
    out.push((
        "conv2d",
        gradcheck(
            |g, i| {
                let y = g.conv2d(i[0], i[1], i[2], 1, 1)?;
                let c = g.constant(p.clone());
                let y = g.mul(y, c)?;
                g.sum(y)
            },
            &[x.clone(), w.clone(), b.clone()],
            STEP,
            OP_TOLERANCE,
        )?,
    ));
    let p2 = proj(&[2, 4, 3, 3], &mut rng);
    out.push((
        "conv2d_stride2",
        gradcheck(
            |g, i| {
                let y = g.conv2d(i[0], i[1], i[2], 2, 1)?;
                let c = g.constant(p2.clone());
                let y = g.mul(y, c)?;
                g.sum(y)
            },
            &[x.clone(), w, b],
            STEP,
            OP_TOLERANCE,
        )?,
    ));

    let a = random(&[2, 2, 3, 3], &mut rng);
    let c = random(&[2, 2, 3, 3], &mut rng);
    let p = proj(&[2, 2, 3, 3], &mut rng);
    for (name, which) in [("add", 0), ("mul", 1)] {
        out.push((
            name,
            gradcheck(
                |g, i| {
                    let y = if which == 0 { g.add(i[0], i[1])? } else { g.mul(i[0], i[1])? };
                    let k = g.constant(p.clone());
                    let y = g.mul(y, k)?;
                    g.sum(y)
                },
                &[a.clone(), c.clone()],
                STEP,
                OP_TOLERANCE,
            )?,
        ));
    }

    let d = random(&[2, 3, 3, 3], &mut rng);
    let pc = proj(&[2, 5, 3, 3], &mut rng);
    out.push((
        "concat",
        gradcheck(
            |g, i| {
                let y = g.concat(&[i[0], i[1]])?;
                let k = g.constant(pc.clone());
                let y = g.mul(y, k)?;
                g.sum(y)
            },
            &[a.clone(), d.clone()],
            STEP,
            OP_TOLERANCE,
        )?,
    ));
    let ps = proj(&[2, 2, 3, 3], &mut rng);
    out.push((
        "slice_channels",
        gradcheck(
            |g, i| {
                let y = g.slice_channels(i[0], 1, 2)?;
                let k = g.constant(ps.clone());
                let y = g.mul(y, k)?;
                g.sum(y)
            },
            &[d],
            STEP,
            OP_TOLERANCE,
        )?,
    ));

    // Keep ReLU inputs away from the kink.
    let r = Tensor::from_fn(&[2, 2, 3, 3], |_| {
        let v: f64 = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    for (name, which) in [("relu", 0), ("sigmoid", 1)] {
        out.push((
            name,
            gradcheck(
                |g, i| {
                    let y = if which == 0 { g.relu(i[0])? } else { g.sigmoid(i[0])? };
                    let k = g.constant(p.clone());
                    let y = g.mul(y, k)?;
                    g.sum(y)
                },
                std::slice::from_ref(&r),
                STEP,
                OP_TOLERANCE,
            )?,
        ));
    }

    let small = random(&[1, 2, 3, 4], &mut rng);
    let pr = proj(&[1, 2, 7, 5], &mut rng);
    out.push((
        "resize_bilinear",
        gradcheck(
            |g, i| {
                let y = g.resize_bilinear(i[0], 7, 5)?;
                let k = g.constant(pr.clone());
                let y = g.mul(y, k)?;
                g.sum(y)
            },
            &[small],
            STEP,
            OP_TOLERANCE,
        )?,
    ));

    let probs = Tensor::from_fn(&[2, 1, 3, 3], |_| rng.random_range(0.05..0.95));
    let target = Tensor::from_fn(&[2, 1, 3, 3], |_| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
    for (name, pw) in [("bce", 1.0), ("bce_pos_weight", 3.0)] {
        out.push((
            name,
            gradcheck(
                |g, i| {
                    let t = g.constant(target.clone());
                    g.bce(i[0], t, 1e-7, pw)
                },
                std::slice::from_ref(&probs),
                STEP,
                OP_TOLERANCE,
            )?,
        ));
    }
    out.push((
        "sum_scale",
        gradcheck(
            |g, i| {
                let y = g.scale(i[0], -2.5)?;
                g.sum(y)
            },
            &[x],
            STEP,
            OP_TOLERANCE,
        )?,
    ));
    Ok(out)
}
