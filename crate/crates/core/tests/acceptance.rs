//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Set `TGRNET_ACCEPTANCE=AC1,AC3` to run a subset; everything runs by default.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use tgrnet::ablation::AblationRow;
use tgrnet::cli::{ablate_cmd, gen_data, infer_cmd, train_cmd};
use tgrnet::config::ExperimentConfig;
use tgrnet::metrics::{aggregate, evaluate_map};
use tgrnet::modelcheck::{model_gradcheck, op_gradchecks, MODEL_TOLERANCE, OP_TOLERANCE};
use tgrnet::tensor::{Graph, Precision, Tensor};
use tgrnet::tgrm::{guide_block, Recurrence, SaliencyNet};
use tgrnet::train::{init_model, synth_dataset, train_loop};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    check(
        elapsed < limit,
        format!("{what} took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()),
    )
}

fn ac1_gradients() -> Outcome {
    let t = Instant::now();
    let mut worst_op: f64 = 0.0;
    for (name, r) in op_gradchecks(1).map_err(|e| e.to_string())? {
        check(r.passed, format!("op {name}: rel err {:.3e} >= {OP_TOLERANCE:e}", r.max_rel_error))?;
        worst_op = worst_op.max(r.max_rel_error);
    }
    let mut worst_model: f64 = 0.0;
    for rec in [Recurrence::Tgrm, Recurrence::Sgrm, Recurrence::Rrb] {
        let r = model_gradcheck(rec, 0).map_err(|e| e.to_string())?;
        check(
            r.passed,
            format!("{rec} model: rel err {:.3e} >= {MODEL_TOLERANCE:e}", r.max_rel_error),
        )?;
        worst_model = worst_model.max(r.max_rel_error);
    }
    within(t.elapsed(), Duration::from_secs(60), "gradcheck")?;
    Ok(format!(
        "ops max rel {worst_op:.2e} < 1e-5, tiny models max rel {worst_model:.2e} < 1e-4, {:.1}s",
        t.elapsed().as_secs_f64()
    ))
}

fn ac2_metric_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut evals = Vec::new();
    let mut oracles = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (pred, gt) = common::random_pair(&mut rng, 16);
        let e = evaluate_map(&pred, &gt).map_err(|e| e.to_string())?;
        let o = common::oracle(&pred, &gt);
        let curve = e.pr_curve.as_ref().ok_or("missing PR curve")?;
        for k in 0..256 {
            worst = worst
                .max((curve[k].precision - o.precision[k]).abs())
                .max((curve[k].recall - o.recall[k]).abs());
        }
        let counts = tgrnet::metrics::confusion_curve(&pred, &gt).map_err(|e| e.to_string())?;
        for (k, c) in counts.iter().enumerate() {
            let direct = tgrnet::metrics::confusion(&pred, &gt, k as f64 / 256.0).map_err(|e| e.to_string())?;
            check(*c == direct, format!("confusion counts differ at threshold {k}"))?;
        }
        worst = worst
            .max((e.mae - o.mae).abs())
            .max((e.f_beta_max().unwrap_or(f64::NAN) - o.f_max).abs())
            .max((e.f_beta_adaptive.unwrap_or(f64::NAN) - o.f_adaptive).abs());
        evals.push(e);
        oracles.push(o);
    }
    let agg = aggregate(&evals).map_err(|e| e.to_string())?;
    let n = oracles.len() as f64;
    let mut f_max: f64 = 0.0;
    for k in 0..256 {
        let p = oracles.iter().map(|o| o.precision[k]).sum::<f64>() / n;
        let r = oracles.iter().map(|o| o.recall[k]).sum::<f64>() / n;
        f_max = f_max.max(1.3 * p * r / (0.3 * p + r));
    }
    worst = worst.max((agg.f_beta_max - f_max).abs());
    check(worst <= 1e-12, format!("max deviation {worst:.3e} > 1e-12"))?;
    within(t.elapsed(), Duration::from_secs(10), "metric oracle")?;
    Ok(format!(
        "100 pairs, max deviation {worst:.1e} <= 1e-12, {:.2}s",
        t.elapsed().as_secs_f64()
    ))
}

fn ac3_guide_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = [2, 4, 5, 5];
    // Dyadic values: every sum and difference in the guide block is exact.
    let state = |rng: &mut ChaCha8Rng| Tensor::from_fn(&shape, |_| rng.random_range(-4096i32..=4096) as f64 / 1024.0);
    for trial in 0..50 {
        let mut g = Graph::new(Precision::F64);
        let s0 = g.constant(state(&mut rng));
        let b0 = g.constant(state(&mut rng));
        let prev = guide_block(&mut g, s0, Some(b0), None, 0).map_err(|e| e.to_string())?;
        let gs_s = g.constant(state(&mut rng));
        let gs_b = g.constant(state(&mut rng));
        let st = guide_block(&mut g, gs_s, Some(gs_b), Some(&prev), 1).map_err(|e| e.to_string())?;
        let f_b = st.f_b.ok_or("two-stream state without boundary features")?;
        let lhs: Vec<f64> = g.value(st.f_s).data().iter().zip(g.value(gs_s).data()).map(|(a, b)| a - b).collect();
        let rhs: Vec<f64> = g.value(f_b).data().iter().zip(g.value(gs_b).data()).map(|(a, b)| a - b).collect();
        check(lhs == rhs, format!("cross-term identity broken on state {trial}"))?;
        let c = shape[1];
        let s = g.slice_channels(st.f_g, 0, c).map_err(|e| e.to_string())?;
        let b = g.slice_channels(st.f_g, c, c).map_err(|e| e.to_string())?;
        check(
            g.value(s).data() == g.value(st.f_s).data() && g.value(b).data() == g.value(f_b).data(),
            format!("slice recovery broken on state {trial}"),
        )?;
    }
    Ok("cross-term and slice-recovery identities bit-exact on 50 states".into())
}

fn small_config(steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.size = 32;
    cfg.data.train_count = 24;
    cfg.data.eval_count = 4;
    cfg.model.guide_width = 4;
    cfg.model.encoder.channels = [4, 8, 8, 8];
    cfg.model.selector.steps = steps;
    cfg.train.iterations = 20;
    cfg.train.batch_size = 4;
    cfg.train.checkpoint_every = 0;
    cfg
}

fn ac4_loss_decomposition() -> Outcome {
    let cfg = small_config(4);
    let data = synth_dataset(cfg.data.train_count, cfg.data.size, cfg.data.seed, cfg.data.contrast, 0);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut bad_steps = None;
    train_loop(&cfg.model, &cfg.train, &data, Some(dir.path()), |i, b| {
        if b.steps() != 5 || b.weights.iter().any(|&w| w != 1.0) {
            bad_steps = Some((i, b.steps()));
        }
        worst = worst.max((b.total - b.weighted_sum()).abs());
    })
    .map_err(|e| e.to_string())?;
    if let Some((i, n)) = bad_steps {
        return Err(format!("iteration {i} summed {n} steps, expected 5 with unit weights"));
    }

    let mut r = csv::Reader::from_path(dir.path().join("loss.csv")).map_err(|e| e.to_string())?;
    let header: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("loss.csv lacks {name}"));
    let l_s: Vec<usize> = (0..5).map(|i| col(&format!("l_s_{i}"))).collect::<Result<_, _>>()?;
    let l_b: Vec<usize> = (0..5).map(|i| col(&format!("l_b_{i}"))).collect::<Result<_, _>>()?;
    check(col("l_s_5").is_err(), "loss.csv logs more than 5 steps")?;
    let total = col("total")?;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| e.to_string());
        let mut sum = 0.0;
        for k in 0..5 {
            sum += 1.0 * (num(l_s[k])? + num(l_b[k])?);
        }
        worst = worst.max((num(total)? - sum).abs());
        rows += 1;
    }
    check(rows == cfg.train.iterations, format!("{rows} iterations logged"))?;
    check(worst <= 1e-12, format!("max |total - sum| = {worst:.3e} > 1e-12"))?;
    Ok(format!("{rows} logged iterations, n=4 spans 5 steps, max |total - sum| {worst:.1e}"))
}

#[derive(Deserialize)]
struct DeskBaseline {
    f_beta_max: f64,
    mae: f64,
    regression_margin_f: f64,
    regression_margin_mae: f64,
}

fn read_loss_totals(path: &Path) -> Result<Vec<f64>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let total = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .position(|h| h == "total")
        .ok_or("loss.csv has no total column")?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            rec[total].parse::<f64>().map_err(|e| e.to_string())
        })
        .collect()
}

fn ac5_learnability() -> Outcome {
    let baseline: DeskBaseline = serde_json::from_str(include_str!("baselines/desk_baseline.json"))
        .map_err(|e| format!("baseline: {e}"))?;
    let cfg = ExperimentConfig::default();
    check(cfg.data.size == 64 && cfg.data.train_count == 2000, "default data is not the desk split")?;
    check(cfg.model.selector.steps == 2, "default model is not n=2")?;
    check(cfg.train.iterations <= 3000, "default schedule exceeds 3000 iterations")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = Instant::now();
    let eval = train_cmd(&cfg, dir.path(), &mut std::io::sink()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let totals = read_loss_totals(&dir.path().join("loss.csv"))?;
    check(totals.len() >= 200, "fewer than 200 logged iterations")?;
    let (first, at200) = (totals[0], totals[199]);
    let summary = format!(
        "max-F {:.4}, MAE {:.4}, loss {first:.3} -> {at200:.3} at iteration 200, {:.1} min",
        eval.f_beta_max,
        eval.mae,
        elapsed.as_secs_f64() / 60.0
    );
    check(eval.f_beta_max >= 0.85, format!("{summary}: max-F below 0.85"))?;
    check(eval.mae <= 0.05, format!("{summary}: MAE above 0.05"))?;
    check(
        eval.f_beta_max >= baseline.f_beta_max - baseline.regression_margin_f,
        format!("{summary}: regressed from frozen max-F {:.4}", baseline.f_beta_max),
    )?;
    check(
        eval.mae <= baseline.mae + baseline.regression_margin_mae,
        format!("{summary}: regressed from frozen MAE {:.4}", baseline.mae),
    )?;
    check(at200 <= 0.5 * first, format!("{summary}: loss not halved by iteration 200"))?;
    within(elapsed, Duration::from_secs(30 * 60), "desk training")?;
    Ok(summary)
}

fn find(rows: &[AblationRow], rec: Recurrence, steps: usize) -> Result<f64, String> {
    let row = rows
        .iter()
        .find(|r| r.recurrence == rec && r.steps == steps)
        .ok_or_else(|| format!("no arm {rec}-{steps}"))?;
    row.f_beta_max
        .ok_or_else(|| format!("arm {} failed: {}", row.label, row.error.as_deref().unwrap_or("")))
}

fn ac6_ablation_trend() -> Outcome {
    let cfg = ExperimentConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = Instant::now();
    let rows = ablate_cmd(&cfg, dir.path(), &mut std::io::sink()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    check(rows.len() == 6, format!("{} arms, expected 3x2", rows.len()))?;
    let t0 = find(&rows, Recurrence::Tgrm, 0)?;
    let t1 = find(&rows, Recurrence::Tgrm, 1)?;
    let s1 = find(&rows, Recurrence::Sgrm, 1)?;
    let r1 = find(&rows, Recurrence::Rrb, 1)?;
    let table = rows
        .iter()
        .map(|r| format!("{}={:.4}", r.label, r.f_beta_max.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(" ");
    let summary = format!("{table}, {:.1} min", elapsed.as_secs_f64() / 60.0);
    check(t1 > t0, format!("{summary}: one refinement step did not improve on none"))?;
    check(t1 >= s1 - 0.01, format!("{summary}: two-stream below single-stream beyond noise"))?;
    check(s1 >= r1 - 0.01, format!("{summary}: single-stream below residual beyond noise"))?;
    check(t1 - r1 > 0.01, format!("{summary}: two-stream margin over residual not above 0.01"))?;
    within(elapsed, Duration::from_secs(2 * 3600), "ablation grid")?;
    Ok(summary)
}

fn read_tree(root: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
        files.push((p.file_name().map(PathBuf::from).unwrap_or_default(), bytes));
    }
    files.sort();
    Ok(files)
}

fn ac7_determinism() -> Outcome {
    let cfg = small_config(2);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    gen_data(&cfg, &data).map_err(|e| e.to_string())?;
    let images: Vec<PathBuf> = (cfg.data.train_count..cfg.data.train_count + cfg.data.eval_count)
        .map(|i| data.join(format!("eval/images/{i:05}.png")))
        .collect();
    let mut losses = Vec::new();
    let mut maps = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        train_cmd(&cfg, &out, &mut std::io::sink()).map_err(|e| e.to_string())?;
        losses.push(std::fs::read(out.join("loss.csv")).map_err(|e| e.to_string())?);
        let m = out.join("maps");
        infer_cmd(&cfg, &out.join("final.ckpt"), &images, &m).map_err(|e| e.to_string())?;
        maps.push(read_tree(&m)?);
    }
    check(losses[0] == losses[1], "loss.csv differs between runs")?;
    check(maps[0] == maps[1], "infer outputs differ between runs")?;
    Ok(format!(
        "loss.csv ({} bytes) and {} inferred maps byte-identical",
        losses[0].len(),
        maps[0].len()
    ))
}

fn ac8_step_count() -> Outcome {
    for rec in [Recurrence::Tgrm, Recurrence::Sgrm, Recurrence::Rrb] {
        for n in 0..=5 {
            let mut cfg = small_config(n);
            cfg.model.selector.recurrence = rec;
            let (net, store): (SaliencyNet, _) = init_model(&cfg.model, 0);
            let mut g = Graph::new(Precision::F64);
            let p = store.bind(&mut g, false);
            let x = g.constant(Tensor::full(&[1, 3, 32, 32], 0.5));
            let maps = net.forward(&mut g, &p, x).map_err(|e| e.to_string())?;
            check(maps.len() == n + 1, format!("{rec} n={n}: {} maps", maps.len()))?;
            let two_stream = rec == Recurrence::Tgrm;
            check(
                maps.iter().all(|m| m.boundary.is_some() == two_stream),
                format!("{rec} n={n}: boundary maps missing or unexpected"),
            )?;
        }
    }
    Ok("n+1 maps for n in 0..=5 on every variant".into())
}

fn main() {
    let only: Option<Vec<String>> = std::env::var("TGRNET_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_uppercase()).collect());
    let criteria: [Criterion; 8] = [
        ("AC1", "gradient correctness", ac1_gradients),
        ("AC2", "metric oracle equivalence", ac2_metric_oracle),
        ("AC3", "guide block identities", ac3_guide_identities),
        ("AC4", "loss decomposition", ac4_loss_decomposition),
        ("AC8", "step-count contract", ac8_step_count),
        ("AC7", "determinism", ac7_determinism),
        ("AC5", "learnability", ac5_learnability),
        ("AC6", "ablation trend", ac6_ablation_trend),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        match run() {
            Ok(detail) => println!("{id} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
