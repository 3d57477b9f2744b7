//! Command-line front end. Each command is also callable as a function.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::ablation::{run_ablation, AblationRow};
use crate::config::{keys_help, ExperimentConfig};
use crate::error::{Error, Result};
use crate::imageio::{load_rgb, save_gray, save_rgb};
use crate::metrics::{evaluate_dataset, SaliencyEval};
use crate::modelcheck::{model_gradcheck, op_gradchecks, MODEL_TOLERANCE, OP_TOLERANCE};
use crate::params::ParamStore;
use crate::tensor::{Precision, Tensor};
use crate::tgrm::{Recurrence, SaliencyNet};
use crate::train::{evaluate_model, init_model, predict, synth_dataset, train_loop};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GRADCHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tgrnet", version, about = "Recurrent two-stream guided refinement for salient object detection")]
pub struct Cli {
    /// Experiment config file (`key = value` with [sections])
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override every seed in the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides paths.out)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Compute matrix products in f32
    #[arg(long, global = true)]
    pub f32: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic train/eval split as image files plus manifest.csv
    GenData,
    /// Train on the synthetic data; writes loss.csv, checkpoints and eval.json
    Train,
    /// Write per-step saliency/boundary maps for each input image
    Infer {
        /// Checkpoint to load (default: paths.checkpoint, then <out>/final.ckpt)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Train and evaluate every arm of the [ablate] grid; writes ablation.csv
    Ablate,
    /// Score prediction maps against ground truth; writes report.json/report.csv
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Finite-difference check of every op and of the tiny full model (always f64)
    Gradcheck,
    /// Print the effective configuration
    ShowConfig,
}

/// Loads the config (or defaults) and applies the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    if cli.f32 {
        cfg.train.precision = Precision::F32;
    }
    Ok(cfg)
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<out>/{train,eval}/{images,saliency,boundary}/NNNNN.png` and
/// `<out>/manifest.csv`. Returns the number of samples written.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let d = &cfg.data;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["split", "index", "seed", "image", "saliency", "boundary"])?;
    let mut total = 0;
    for (split, count, first) in [("train", d.train_count, 0), ("eval", d.eval_count, d.train_count)] {
        for sub in ["images", "saliency", "boundary"] {
            mkdir(&out.join(split).join(sub))?;
        }
        for (k, s) in synth_dataset(count, d.size, d.seed, d.contrast, first).iter().enumerate() {
            let index = first + k;
            let name = format!("{index:05}.png");
            let rel = |sub: &str| format!("{split}/{sub}/{name}");
            save_rgb(&out.join(rel("images")), s.height, s.width, &s.image)?;
            save_gray(&out.join(rel("saliency")), &s.saliency)?;
            save_gray(&out.join(rel("boundary")), &s.boundary)?;
            w.write_record([
                split.to_string(),
                index.to_string(),
                s.seed.to_string(),
                rel("images"),
                rel("saliency"),
                rel("boundary"),
            ])?;
            total += 1;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(out.join("manifest.csv"), bytes).map_err(|e| Error::io(out.join("manifest.csv"), e))?;
    write_text(&out.join("config.cfg"), &cfg.to_text())?;
    Ok(total)
}

/// Trains per the config, then evaluates on the held-out split. Writes
/// `loss.csv`, checkpoints, `config.cfg` and `eval.json` into `out`.
pub fn train_cmd(cfg: &ExperimentConfig, out: &Path, log: &mut impl Write) -> Result<SaliencyEval> {
    let d = &cfg.data;
    let train = synth_dataset(d.train_count, d.size, d.seed, d.contrast, 0);
    let held = synth_dataset(d.eval_count, d.size, d.seed, d.contrast, d.train_count);
    mkdir(out)?;
    write_text(&out.join("config.cfg"), &cfg.to_text())?;
    let result = train_loop(&cfg.model, &cfg.train, &train, Some(out), |i, b| {
        if i % 100 == 0 || i == 1 {
            let _ = writeln!(log, "iter {i:>6}  total {:.5}  l_s {:?}", b.total, b.l_s);
        }
    })?;
    let (eval, _) = evaluate_model(&result.net, &result.store, &held, cfg.train.batch_size, cfg.train.precision)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "f_beta_max": eval.f_beta_max,
        "f_beta_adaptive": eval.f_beta_adaptive,
        "mae": eval.mae,
    }))?;
    write_text(&out.join("eval.json"), &(json + "\n"))?;
    let _ = writeln!(
        log,
        "held-out: max-F {:.4}  adaptive-F {:.4}  MAE {:.4}",
        eval.f_beta_max, eval.f_beta_adaptive, eval.mae
    );
    Ok(eval)
}

/// Builds the configured network and loads `checkpoint` into it.
pub fn load_model(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<(SaliencyNet, ParamStore)> {
    let (net, mut store) = init_model(&cfg.model, cfg.train.seed);
    store.load(checkpoint)?;
    Ok((net, store))
}

/// Writes `<stem>_S_<i>.png`, `<stem>_B_<i>.png` (variants with a boundary
/// stream only) and `<stem>_final.png` for every image. Returns the files written.
pub fn infer_cmd(cfg: &ExperimentConfig, checkpoint: &Path, images: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let (net, store) = load_model(cfg, checkpoint)?;
    mkdir(out)?;
    let mut written = Vec::new();
    for path in images {
        let (h, w, planes) = load_rgb(path)?;
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::InvalidArgument(format!(
                "{}: size {h}x{w} is not a multiple of 8",
                path.display()
            )));
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidArgument(format!("{}: no file stem", path.display())))?;
        let pred = predict(&net, &store, &Tensor::new(&[1, 3, h, w], planes)?, cfg.train.precision)?;
        for (i, maps) in pred.saliency.iter().enumerate() {
            let p = out.join(format!("{stem}_S_{i}.png"));
            save_gray(&p, &maps[0])?;
            written.push(p);
        }
        for (i, maps) in pred.boundary.iter().enumerate() {
            if let Some(maps) = maps {
                let p = out.join(format!("{stem}_B_{i}.png"));
                save_gray(&p, &maps[0])?;
                written.push(p);
            }
        }
        let p = out.join(format!("{stem}_final.png"));
        save_gray(&p, &pred.saliency.last().expect("at least one step")[0])?;
        written.push(p);
    }
    Ok(written)
}

pub fn ablate_cmd(cfg: &ExperimentConfig, out: &Path, log: &mut impl Write) -> Result<Vec<AblationRow>> {
    mkdir(out)?;
    write_text(&out.join("config.cfg"), &cfg.to_text())?;
    let _ = writeln!(log, "{:<16} {:>8} {:>8} {:>8}", "arm", "max-F", "adapt-F", "MAE");
    run_ablation(cfg, Some(out), |r| {
        let _ = match (r.f_beta_max, r.f_beta_adaptive, r.mae) {
            (Some(f), Some(a), Some(m)) => writeln!(log, "{:<16} {f:>8.4} {a:>8.4} {m:>8.4}", r.label),
            _ => writeln!(log, "{:<16} failed: {}", r.label, r.error.as_deref().unwrap_or("")),
        };
    })
}

/// Runs every op check and the tiny-model checks for both guided variants and
/// the residual variant. Returns whether all passed.
pub fn gradcheck_cmd(seed: u64, log: &mut impl Write) -> Result<bool> {
    let mut ok = true;
    for (name, r) in op_gradchecks(seed)? {
        let _ = writeln!(log, "op {name:<18} max rel err {:.3e}  (< {OP_TOLERANCE:e}) {}", r.max_rel_error, pass(r.passed));
        ok &= r.passed;
    }
    for rec in [Recurrence::Tgrm, Recurrence::Sgrm, Recurrence::Rrb] {
        let r = model_gradcheck(rec, seed)?;
        let _ = writeln!(
            log,
            "model {:<15} max rel err {:.3e}  (< {MODEL_TOLERANCE:e}) {}",
            rec.to_string(),
            r.max_rel_error,
            pass(r.passed)
        );
        ok &= r.passed;
    }
    Ok(ok)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    let out = cfg.paths.out.clone();
    let mut stdout = std::io::stdout();
    match &cli.command {
        Command::GenData => {
            let n = gen_data(&cfg, &out)?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train => {
            train_cmd(&cfg, &out, &mut stdout)?;
        }
        Command::Infer { checkpoint, images } => {
            let ckpt = checkpoint
                .clone()
                .or_else(|| cfg.paths.checkpoint.clone())
                .unwrap_or_else(|| out.join("final.ckpt"));
            let files = infer_cmd(&cfg, &ckpt, images, &out)?;
            println!("wrote {} maps to {}", files.len(), out.display());
        }
        Command::Ablate => {
            let rows = ablate_cmd(&cfg, &out, &mut stdout)?;
            println!("wrote {} rows to {}", rows.len(), out.join("ablation.csv").display());
        }
        Command::Eval { pred, gt } => {
            let r = evaluate_dataset(pred, gt, Some(&out))?;
            println!(
                "{} images: f_beta_max {:.4}  f_beta_adaptive {:.4}  mae {:.4}",
                r.images.len(),
                r.aggregate.f_beta_max,
                r.aggregate.f_beta_adaptive,
                r.aggregate.mae
            );
        }
        Command::Gradcheck => {
            if !gradcheck_cmd(cfg.train.seed, &mut stdout)? {
                return Ok(EXIT_GRADCHECK);
            }
        }
        Command::ShowConfig => print!("{}", cfg.to_text()),
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cmd = Cli::command().after_help(keys_help());
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
