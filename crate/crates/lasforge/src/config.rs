//! Training configuration: defaults, the flat `key = value` config-file
//! format, and command-line overrides.
//!
//! The format is line-oriented: `key = value`, `#` starts a comment, blank
//! lines are ignored. Integer-list values accept either an inclusive range
//! (`3..15`) or a comma list (`3,5,8`). Parse errors report the source name
//! and 1-based line. The full schema with defaults:
//!
//! ```text
//! # objective and schedule
//! alpha = 2.0            # weight of the lookahead robustness term
//! beta = 4.0             # weight of the lookahead clean-accuracy term
//! k = 40                 # classifier updates once per k batches
//! eta1 = 0.1             # classifier learning rate
//! eta2 = 0.001           # strategy learning rate
//! lambda = 0.1           # lookahead step size (defaults to eta1)
//! T = 50                 # epochs (alias: epochs)
//! batch_size = 64
//! momentum = 0.0         # classifier SGD momentum
//! weight_decay = 0.0     # classifier L2 penalty
//! seed = 0
//! random_start = true    # random point in the ball before PGD
//! per_sample_lookahead = false
//! baseline = false       # subtract batch-mean weight in the policy gradient
//! test_fraction = 0.25
//! checkpoint_every = 10  # epochs between checkpoints; 0 = final only
//!
//! # strategy space (1/255 units for epsilons and steps)
//! epsilons = 3..15
//! steps = 1..6
//! iterations = 3..15
//!
//! # fixed evaluation attack
//! eval_epsilon = 8
//! eval_step = 2
//! eval_iters = 10
//!
//! # networks (hidden layer widths; empty = linear)
//! target_hidden = 64,64
//! strategy_hidden = 64
//!
//! # dataset: two_moons | blobs | csv
//! dataset = two_moons
//! n = 800                # generated sample count
//! noise = 0.15           # two_moons jitter
//! classes = 3            # blobs
//! dim = 2                # blobs
//! separation = 4.0       # blobs
//! csv = data.csv         # csv source path
//! label_col = label      # csv label column
//! data_seed = 0          # defaults to seed
//! out = runs/exp1        # artifact directory (optional)
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::attack::{AttackParams, StrategySpace};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    TwoMoons { n: usize, noise: f64 },
    Blobs { n: usize, classes: usize, dim: usize, separation: f64 },
    Csv { path: PathBuf, label_col: String },
}

/// Complete description of a training run. See the module docs for the
/// config-file schema; field names match keys except `epochs` (key `T`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub eta1: f64,
    pub eta2: f64,
    /// Lookahead step size; `None` follows `eta1`.
    pub lambda: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub random_start: bool,
    pub per_sample_lookahead: bool,
    pub baseline: bool,
    pub test_fraction: f64,
    pub checkpoint_every: usize,
    pub space: StrategySpace,
    pub eval_attack: AttackParams,
    pub target_hidden: Vec<usize>,
    pub strategy_hidden: Vec<usize>,
    pub dataset: DatasetConfig,
    /// Seed for dataset generation/splitting; `None` follows `seed`.
    pub data_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 50,
            batch_size: 64,
            alpha: 2.0,
            beta: 4.0,
            k: 40,
            eta1: 0.1,
            eta2: 0.001,
            lambda: None,
            momentum: 0.0,
            weight_decay: 0.0,
            random_start: true,
            per_sample_lookahead: false,
            baseline: false,
            test_fraction: 0.25,
            checkpoint_every: 10,
            space: StrategySpace::default(),
            eval_attack: AttackParams::new(8, 2, 10),
            target_hidden: vec![64, 64],
            strategy_hidden: vec![64],
            dataset: DatasetConfig::TwoMoons { n: 800, noise: 0.15 },
            data_seed: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    /// Effective lookahead step size.
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(self.eta1)
    }

    /// Effective dataset seed.
    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::invalid("alpha and beta must be >= 0"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if !(self.eta1 > 0.0) || !(self.eta2 > 0.0) {
            return Err(Error::invalid("learning rates eta1 and eta2 must be > 0"));
        }
        if self.lambda() < 0.0 {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("T and batch_size must be >= 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie strictly between 0 and 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Parses config text on top of the defaults. `source` labels errors.
    pub fn parse_str(text: &str, source: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| Error::Config {
                source_name: source.to_string(),
                line,
                msg: format!("expected `key = value`, got {stripped:?}"),
            })?;
            cfg.apply(key.trim(), value.trim(), source, line)?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` override strings (the `--set` flag) in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for (i, item) in overrides.iter().enumerate() {
            let line = i + 1;
            let (key, value) = item.split_once('=').ok_or_else(|| Error::Config {
                source_name: "--set".to_string(),
                line,
                msg: format!("expected key=value, got {item:?}"),
            })?;
            self.apply(key.trim(), value.trim(), "--set", line)?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str, source: &str, line: usize) -> Result<()> {
        let err = |msg: String| Error::Config { source_name: source.to_string(), line, msg };
        let bad = |key: &str, value: &str, want: &str| {
            err(format!("{key}: cannot parse {value:?} as {want}"))
        };

        macro_rules! parse {
            ($ty:ty, $want:expr) => {
                value.parse::<$ty>().map_err(|_| bad(key, value, $want))?
            };
        }

        match key {
            "seed" => self.seed = parse!(u64, "an unsigned integer"),
            "T" | "epochs" => self.epochs = parse!(usize, "a positive integer"),
            "batch_size" => self.batch_size = parse!(usize, "a positive integer"),
            "alpha" => self.alpha = parse!(f64, "a real number"),
            "beta" => self.beta = parse!(f64, "a real number"),
            "k" => self.k = parse!(usize, "a positive integer"),
            "eta1" => self.eta1 = parse!(f64, "a real number"),
            "eta2" => self.eta2 = parse!(f64, "a real number"),
            "lambda" => self.lambda = Some(parse!(f64, "a real number")),
            "momentum" => self.momentum = parse!(f64, "a real number"),
            "weight_decay" => self.weight_decay = parse!(f64, "a real number"),
            "random_start" => self.random_start = parse_bool(value).ok_or_else(|| bad(key, value, "a boolean"))?,
            "per_sample_lookahead" => {
                self.per_sample_lookahead = parse_bool(value).ok_or_else(|| bad(key, value, "a boolean"))?
            }
            "baseline" => self.baseline = parse_bool(value).ok_or_else(|| bad(key, value, "a boolean"))?,
            "test_fraction" => self.test_fraction = parse!(f64, "a real number"),
            "checkpoint_every" => self.checkpoint_every = parse!(usize, "an integer"),
            "epsilons" => self.set_space(0, key, value, source, line)?,
            "steps" => self.set_space(1, key, value, source, line)?,
            "iterations" => self.set_space(2, key, value, source, line)?,
            "eval_epsilon" => self.eval_attack.epsilon = parse!(u32, "an unsigned integer"),
            "eval_step" => self.eval_attack.step = parse!(u32, "an unsigned integer"),
            "eval_iters" => self.eval_attack.iters = parse!(u32, "an unsigned integer"),
            "target_hidden" => {
                self.target_hidden = parse_usize_list(value).ok_or_else(|| bad(key, value, "a comma list"))?
            }
            "strategy_hidden" => {
                self.strategy_hidden = parse_usize_list(value).ok_or_else(|| bad(key, value, "a comma list"))?
            }
            "dataset" => {
                self.dataset = match value {
                    "two_moons" => DatasetConfig::TwoMoons { n: 800, noise: 0.15 },
                    "blobs" => DatasetConfig::Blobs { n: 800, classes: 3, dim: 2, separation: 4.0 },
                    "csv" => DatasetConfig::Csv { path: PathBuf::new(), label_col: "label".to_string() },
                    other => return Err(err(format!("unknown dataset kind {other:?}"))),
                }
            }
            "n" => {
                let n = parse!(usize, "a positive integer");
                match &mut self.dataset {
                    DatasetConfig::TwoMoons { n: slot, .. } | DatasetConfig::Blobs { n: slot, .. } => *slot = n,
                    DatasetConfig::Csv { .. } => return Err(err("n does not apply to csv datasets".to_string())),
                }
            }
            "noise" => match &mut self.dataset {
                DatasetConfig::TwoMoons { noise, .. } => *noise = parse!(f64, "a real number"),
                _ => return Err(err("noise only applies to dataset = two_moons".to_string())),
            },
            "classes" => match &mut self.dataset {
                DatasetConfig::Blobs { classes, .. } => *classes = parse!(usize, "a positive integer"),
                _ => return Err(err("classes only applies to dataset = blobs".to_string())),
            },
            "dim" => match &mut self.dataset {
                DatasetConfig::Blobs { dim, .. } => *dim = parse!(usize, "a positive integer"),
                _ => return Err(err("dim only applies to dataset = blobs".to_string())),
            },
            "separation" => match &mut self.dataset {
                DatasetConfig::Blobs { separation, .. } => *separation = parse!(f64, "a real number"),
                _ => return Err(err("separation only applies to dataset = blobs".to_string())),
            },
            "csv" => match &mut self.dataset {
                DatasetConfig::Csv { path, .. } => *path = PathBuf::from(value),
                _ => return Err(err("csv only applies to dataset = csv".to_string())),
            },
            "label_col" => match &mut self.dataset {
                DatasetConfig::Csv { label_col, .. } => *label_col = value.to_string(),
                _ => return Err(err("label_col only applies to dataset = csv".to_string())),
            },
            "data_seed" => self.data_seed = Some(parse!(u64, "an unsigned integer")),
            "out" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(err(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn set_space(&mut self, head: usize, key: &str, value: &str, source: &str, line: usize) -> Result<()> {
        let list = parse_u32_list(value).ok_or_else(|| Error::Config {
            source_name: source.to_string(),
            line,
            msg: format!("{key}: cannot parse {value:?} as a range (a..b) or comma list"),
        })?;
        let mut lists = [
            self.space.epsilons().to_vec(),
            self.space.steps().to_vec(),
            self.space.iters().to_vec(),
        ];
        lists[head] = list;
        let [e, s, i] = lists;
        self.space = StrategySpace::new(e, s, i).map_err(|e| Error::Config {
            source_name: source.to_string(),
            line,
            msg: e.to_string(),
        })?;
        Ok(())
    }

    /// Builds the dataset this config describes, seeded by [`data_seed`].
    pub fn build_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetConfig::TwoMoons { n, noise } => data::make_two_moons(*n, *noise, self.data_seed()),
            DatasetConfig::Blobs { n, classes, dim, separation } => {
                data::make_gaussian_blobs(*n, *classes, *dim, *separation, self.data_seed())
            }
            DatasetConfig::Csv { path, label_col } => data::load_csv(path, label_col),
        }
    }

    /// Short human-readable label for the configured dataset.
    pub fn dataset_id(&self) -> String {
        match &self.dataset {
            DatasetConfig::TwoMoons { n, noise } => format!("two_moons(n={n}, noise={noise})"),
            DatasetConfig::Blobs { n, classes, dim, separation } => {
                format!("blobs(n={n}, classes={classes}, dim={dim}, separation={separation})")
            }
            DatasetConfig::Csv { path, label_col } => format!("csv({}, label={label_col})", path.display()),
        }
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "1" | "on" | "yes" => Some(true),
        "false" | "0" | "off" | "no" => Some(false),
        _ => None,
    }
}

/// `a..b` (inclusive) or a comma list; single values are one-element lists.
fn parse_u32_list(value: &str) -> Option<Vec<u32>> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u32 = lo.trim().parse().ok()?;
        let hi: u32 = hi.trim().parse().ok()?;
        if lo > hi {
            return None;
        }
        return Some((lo..=hi).collect());
    }
    value.split(',').map(|v| v.trim().parse::<u32>().ok()).collect()
}

/// Comma list of widths; an empty string means no hidden layers.
fn parse_usize_list(value: &str) -> Option<Vec<usize>> {
    if value.is_empty() {
        return Some(vec![]);
    }
    value.split(',').map(|v| v.trim().parse::<usize>().ok()).collect()
}
