//! Experiment configuration: a flat `key = value` text format grouped into
//! `[section]`s. Blank lines and lines starting with `#` are ignored. Every
//! key is optional; missing keys keep their defaults. Unknown sections or
//! keys are rejected with the offending line number.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::backbone::EncoderConfig;
use crate::error::{Error, Result};
use crate::params::Init;
use crate::tensor::Precision;
use crate::tgrm::{ModelConfig, Recurrence, Reference, VariantSelector};
use crate::train::{Contrast, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Side length of the square synthetic images; a multiple of 8.
    pub size: usize,
    pub train_count: usize,
    pub eval_count: usize,
    pub seed: u64,
    pub contrast: Contrast,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            size: 64,
            train_count: 2000,
            eval_count: 200,
            seed: 1,
            contrast: Contrast::Normal,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathsConfig {
    pub out: PathBuf,
    /// Checkpoint for `infer`; defaults to `<out>/final.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblateConfig {
    pub recurrences: Vec<Recurrence>,
    pub steps: Vec<usize>,
    pub references: Vec<Reference>,
    pub contrast: Contrast,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            recurrences: vec![Recurrence::Rrb, Recurrence::Sgrm, Recurrence::Tgrm],
            steps: vec![0, 1],
            references: vec![Reference::Low],
            contrast: Contrast::Low,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: PathsConfig,
    pub ablate: AblateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataConfig::default(),
            model: ModelConfig {
                guide_width: 16,
                selector: VariantSelector {
                    steps: 2,
                    ..VariantSelector::default()
                },
                ..ModelConfig::default()
            },
            train: TrainConfig::default(),
            paths: PathsConfig {
                out: PathBuf::from("runs/default"),
                checkpoint: None,
            },
            ablate: AblateConfig::default(),
        }
    }
}

/// `(section, key, description)` for every accepted key, in file order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data", "size", "image side length, multiple of 8"),
    ("data", "train_count", "number of training samples"),
    ("data", "eval_count", "number of held-out samples"),
    ("data", "seed", "dataset root seed"),
    ("data", "contrast", "normal | low"),
    ("model", "guide_width", "channels of each guide stream"),
    ("model", "recurrence", "tgrm | sgrm | rrb"),
    ("model", "reference", "low | hh | ll | hl2"),
    ("model", "steps", "number of refinement steps n (n+1 maps)"),
    ("model", "share_stream_params", "reuse step-1 stream blocks for later steps"),
    ("model", "init", "he | gaussian:<std>"),
    ("model", "encoder_channels", "four comma-separated stage widths"),
    ("train", "iterations", "number of SGD iterations"),
    ("train", "batch_size", "samples per iteration"),
    ("train", "lr", "learning rate"),
    ("train", "momentum", "SGD momentum"),
    ("train", "weight_decay", "coupled L2 weight decay"),
    ("train", "loss_weights", "comma-separated per-step weights, or `ones`"),
    ("train", "boundary_pos_weight", "positive-class weight of the boundary BCE"),
    ("train", "grad_clip", "global gradient-norm limit (0 = off)"),
    ("train", "augment", "true | false"),
    ("train", "checkpoint_every", "checkpoint interval in iterations (0 = off)"),
    ("train", "seed", "root seed for init, batch order and augmentation"),
    ("train", "precision", "f64 | f32 (matrix products only)"),
    ("paths", "out", "output directory"),
    ("paths", "checkpoint", "checkpoint to load for infer (default <out>/final.ckpt)"),
    ("ablate", "recurrences", "comma-separated subset of tgrm,sgrm,rrb"),
    ("ablate", "steps", "comma-separated step counts"),
    ("ablate", "references", "comma-separated subset of low,hh,ll,hl2"),
    ("ablate", "contrast", "normal | low"),
];

/// Help text listing every config key.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys ([section] key: description):\n");
    let mut current = "";
    for (section, key, desc) in KEYS {
        if *section != current {
            let _ = writeln!(s, "  [{section}]");
            current = section;
        }
        let _ = writeln!(s, "    {key:<20} {desc}");
    }
    s
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|p| f(p.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{v}` is not true|false")),
    }
}

fn parse_precision(v: &str) -> std::result::Result<Precision, String> {
    match v {
        "f64" => Ok(Precision::F64),
        "f32" => Ok(Precision::F32),
        _ => Err(format!("`{v}` is not f64|f32")),
    }
}

fn parse_init(v: &str) -> std::result::Result<Init, String> {
    if v == "he" {
        return Ok(Init::He);
    }
    match v.strip_prefix("gaussian:") {
        Some(std) => Ok(Init::Gaussian { std: parse_num(std)? }),
        None => Err(format!("`{v}` is not he|gaussian:<std>")),
    }
}

fn init_str(init: Init) -> String {
    match init {
        Init::He => "he".into(),
        Init::Gaussian { std } => format!("gaussian:{std}"),
    }
}

impl ExperimentConfig {
    fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        match (section, key) {
            ("data", "size") => self.data.size = parse_num(v)?,
            ("data", "train_count") => self.data.train_count = parse_num(v)?,
            ("data", "eval_count") => self.data.eval_count = parse_num(v)?,
            ("data", "seed") => self.data.seed = parse_num(v)?,
            ("data", "contrast") => self.data.contrast = v.parse()?,
            ("model", "guide_width") => self.model.guide_width = parse_num(v)?,
            ("model", "recurrence") => self.model.selector.recurrence = v.parse()?,
            ("model", "reference") => self.model.selector.reference = v.parse()?,
            ("model", "steps") => self.model.selector.steps = parse_num(v)?,
            ("model", "share_stream_params") => self.model.share_stream_params = parse_bool(v)?,
            ("model", "init") => self.model.init = parse_init(v)?,
            ("model", "encoder_channels") => {
                let c: Vec<usize> = parse_list(v, parse_num)?;
                self.model.encoder.channels = c
                    .try_into()
                    .map_err(|c: Vec<usize>| format!("expected 4 stage widths, got {}", c.len()))?;
            }
            ("train", "iterations") => self.train.iterations = parse_num(v)?,
            ("train", "batch_size") => self.train.batch_size = parse_num(v)?,
            ("train", "lr") => self.train.lr = parse_num(v)?,
            ("train", "momentum") => self.train.momentum = parse_num(v)?,
            ("train", "weight_decay") => self.train.weight_decay = parse_num(v)?,
            ("train", "loss_weights") => {
                self.train.loss_weights = if v == "ones" { None } else { Some(parse_list(v, parse_num)?) }
            }
            ("train", "boundary_pos_weight") => self.train.boundary_pos_weight = parse_num(v)?,
            ("train", "grad_clip") => self.train.grad_clip = parse_num(v)?,
            ("train", "augment") => self.train.augment = parse_bool(v)?,
            ("train", "checkpoint_every") => self.train.checkpoint_every = parse_num(v)?,
            ("train", "seed") => self.train.seed = parse_num(v)?,
            ("train", "precision") => self.train.precision = parse_precision(v)?,
            ("paths", "out") => self.paths.out = PathBuf::from(v),
            ("paths", "checkpoint") => {
                self.paths.checkpoint = if v.is_empty() { None } else { Some(PathBuf::from(v)) }
            }
            ("ablate", "recurrences") => self.ablate.recurrences = parse_list(v, str::parse)?,
            ("ablate", "steps") => self.ablate.steps = parse_list(v, parse_num)?,
            ("ablate", "references") => self.ablate.references = parse_list(v, str::parse)?,
            ("ablate", "contrast") => self.ablate.contrast = v.parse()?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> String {
        match (section, key) {
            ("data", "size") => self.data.size.to_string(),
            ("data", "train_count") => self.data.train_count.to_string(),
            ("data", "eval_count") => self.data.eval_count.to_string(),
            ("data", "seed") => self.data.seed.to_string(),
            ("data", "contrast") => self.data.contrast.to_string(),
            ("model", "guide_width") => self.model.guide_width.to_string(),
            ("model", "recurrence") => self.model.selector.recurrence.to_string(),
            ("model", "reference") => self.model.selector.reference.to_string(),
            ("model", "steps") => self.model.selector.steps.to_string(),
            ("model", "share_stream_params") => self.model.share_stream_params.to_string(),
            ("model", "init") => init_str(self.model.init),
            ("model", "encoder_channels") => join(&self.model.encoder.channels),
            ("train", "iterations") => self.train.iterations.to_string(),
            ("train", "batch_size") => self.train.batch_size.to_string(),
            ("train", "lr") => self.train.lr.to_string(),
            ("train", "momentum") => self.train.momentum.to_string(),
            ("train", "weight_decay") => self.train.weight_decay.to_string(),
            ("train", "loss_weights") => match &self.train.loss_weights {
                None => "ones".into(),
                Some(w) => join(w),
            },
            ("train", "boundary_pos_weight") => self.train.boundary_pos_weight.to_string(),
            ("train", "grad_clip") => self.train.grad_clip.to_string(),
            ("train", "augment") => self.train.augment.to_string(),
            ("train", "checkpoint_every") => self.train.checkpoint_every.to_string(),
            ("train", "seed") => self.train.seed.to_string(),
            ("train", "precision") => match self.train.precision {
                Precision::F64 => "f64".into(),
                Precision::F32 => "f32".into(),
            },
            ("paths", "out") => self.paths.out.display().to_string(),
            ("paths", "checkpoint") => self
                .paths
                .checkpoint
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            ("ablate", "recurrences") => join(&self.ablate.recurrences),
            ("ablate", "steps") => join(&self.ablate.steps),
            ("ablate", "references") => join(&self.ablate.references),
            ("ablate", "contrast") => self.ablate.contrast.to_string(),
            _ => unreachable!("key table and getter disagree on {section}.{key}"),
        }
    }

    /// Parses config text on top of the defaults, then validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut lines: HashMap<String, usize> = HashMap::new();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !KEYS.iter().any(|(s, _, _)| *s == name) {
                    return Err(Error::Config {
                        line: line_no,
                        key: format!("[{name}]"),
                        msg: "unknown section".into(),
                    });
                }
                section = name.to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: line_no,
                    key: line.to_string(),
                    msg: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let qualified = format!("{section}.{key}");
            let Some((s, k, _)) = KEYS.iter().find(|(s, k, _)| *s == section && *k == key) else {
                return Err(Error::Config {
                    line: line_no,
                    key: qualified,
                    msg: "unknown key".into(),
                });
            };
            cfg.set(s, k, value).map_err(|msg| Error::Config {
                line: line_no,
                key: qualified,
                msg,
            })?;
            lines.insert(format!("{s}.{k}"), line_no);
        }
        cfg.validate().map_err(|(key, msg)| Error::Config {
            line: lines.get(key).copied().unwrap_or(0),
            key: key.to_string(),
            msg,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Checks cross-field constraints. Returns the offending `section.key`.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let d = &self.data;
        if d.size == 0 || !d.size.is_multiple_of(8) {
            return Err(("data.size", format!("{} is not a positive multiple of 8", d.size)));
        }
        if d.train_count == 0 {
            return Err(("data.train_count", "must be positive".into()));
        }
        if d.eval_count == 0 {
            return Err(("data.eval_count", "must be positive".into()));
        }
        if self.model.guide_width == 0 {
            return Err(("model.guide_width", "must be positive".into()));
        }
        if self.model.encoder.channels.contains(&0) {
            return Err(("model.encoder_channels", "widths must be positive".into()));
        }
        if let Init::Gaussian { std } = self.model.init {
            if !(std.is_finite() && std > 0.0) {
                return Err(("model.init", "std must be positive".into()));
            }
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(("train.batch_size", "must be positive".into()));
        }
        for (key, v) in [
            ("train.lr", t.lr),
            ("train.momentum", t.momentum),
            ("train.weight_decay", t.weight_decay),
            ("train.boundary_pos_weight", t.boundary_pos_weight),
            ("train.grad_clip", t.grad_clip),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((key, format!("{v} must be finite and non-negative")));
            }
        }
        if let Some(w) = &t.loss_weights {
            if w.len() != self.model.selector.steps + 1 {
                return Err((
                    "train.loss_weights",
                    format!("{} weights for {} maps", w.len(), self.model.selector.steps + 1),
                ));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(("train.loss_weights", "weights must be finite and non-negative".into()));
            }
        }
        let a = &self.ablate;
        if a.recurrences.is_empty() || a.steps.is_empty() || a.references.is_empty() {
            return Err(("ablate.recurrences", "ablation grid must not be empty".into()));
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut current = "";
        for (section, key, _) in KEYS {
            if *section != current {
                if !current.is_empty() {
                    s.push('\n');
                }
                let _ = writeln!(s, "[{section}]");
                current = section;
            }
            let _ = writeln!(s, "{key} = {}", self.get(section, key));
        }
        s
    }

    /// Overrides every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.seed = seed;
        self.train.seed = seed;
        self
    }

    /// The full-scale settings: 304x304 inputs (300 rounded up to a multiple
    /// of 8), batch 12, four refinement steps, 32-channel guides, lr 0.001,
    /// Gaussian(0, 0.01) initialisation and no gradient clipping.
    pub fn full_scale() -> Self {
        let mut c = ExperimentConfig::default();
        c.data.size = 304;
        c.model.guide_width = 32;
        c.model.selector.steps = 4;
        c.model.init = Init::Gaussian { std: 0.01 };
        c.model.encoder = EncoderConfig::default();
        c.train.batch_size = 12;
        c.train.lr = 0.001;
        c.train.momentum = 0.9;
        c.train.weight_decay = 0.001;
        c.train.iterations = 15000;
        c.train.grad_clip = 0.0;
        c
    }
}
