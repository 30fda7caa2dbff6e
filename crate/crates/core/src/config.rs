//! Run configuration shared by every CLI subcommand.
//!
//! Values are layered: built-in defaults, then a `key = value` file, then
//! `INFOPURSUIT_<KEY>` environment variables, then command-line flags. Every
//! layer goes through [`RunConfig::set`], and [`RunConfig::validate`] checks
//! the result against the preconditions of the modules it feeds.

use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::answers::NliClientConfig;
use crate::exactip::{DEFAULT_ALPHA, DEFAULT_EPSILON_STOP};
use crate::pursuit::{StopRule, DEFAULT_CONFIDENCE, DEFAULT_MAX_QUERIES};
use crate::querybank::{BankConfig, DEFAULT_DEDUP_THRESHOLD, DEFAULT_K};
use crate::vip::TrainConfig;

pub const ENV_PREFIX: &str = "INFOPURSUIT_";

pub const DEFAULT_INSTRUCTION: &str = "Decide whether the hypothesis is entailed by the premise, \
contradicted by it, or not addressed. Answer 0 for contradiction, 1 for not addressed, 2 for entailment.";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

/// Synthetic generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Informative,
    Separable,
    Random,
    Uninformative,
}

impl SynthKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "informative" | "naive-bayes" => Self::Informative,
            "separable" => Self::Separable,
            "random" => Self::Random,
            "uninformative" => Self::Uninformative,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Informative => "informative",
            Self::Separable => "separable",
            Self::Random => "random",
            Self::Uninformative => "uninformative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    // query bank
    pub k: usize,
    pub dedup_threshold: f64,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
    // answering
    pub nli_url: Option<String>,
    pub nli_timeout_ms: u64,
    pub nli_attempts: u32,
    pub fan_out: usize,
    pub instruction: String,
    // synthetic data
    pub n: usize,
    pub queries: usize,
    pub prior: f64,
    pub synth_kind: SynthKind,
    // training
    pub ratio: [f64; 3],
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub temperature_start: f64,
    pub temperature_end: f64,
    pub random_phase_fraction: f64,
    pub pos_weight: Option<f64>,
    pub max_history: Option<usize>,
    pub task: usize,
    pub multi_head: bool,
    // pursuit and evaluation
    pub confidence: f64,
    pub max_queries: usize,
    pub budgets: Option<Vec<usize>>,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            threads: None,
            k: DEFAULT_K,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            kmeans_iters: 100,
            kmeans_tol: 1e-6,
            nli_url: None,
            nli_timeout_ms: 30_000,
            nli_attempts: 3,
            fan_out: 8,
            instruction: DEFAULT_INSTRUCTION.to_owned(),
            n: 2000,
            queries: 20,
            prior: 0.5,
            synth_kind: SynthKind::Informative,
            ratio: [7.0, 1.0, 2.0],
            lr: t.lr,
            lr_min: t.lr_min,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            hidden: t.hidden,
            temperature_start: t.temperature_start,
            temperature_end: t.temperature_end,
            random_phase_fraction: t.random_phase_fraction,
            pos_weight: None,
            max_history: None,
            task: 0,
            multi_head: false,
            confidence: DEFAULT_CONFIDENCE,
            max_queries: DEFAULT_MAX_QUERIES,
            budgets: None,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON_STOP,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_owned(),
        message: e.to_string(),
    })
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match value.trim() {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

/// `7:1:2` or `0.7,0.1,0.2`.
pub fn parse_ratio(value: &str) -> Result<[f64; 3], ConfigError> {
    let parts: Vec<&str> = value.split([':', ',']).collect();
    if parts.len() != 3 {
        return Err(ConfigError::BadValue {
            key: "ratio".into(),
            message: format!("expected three parts, got `{value}`"),
        });
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse("ratio", p)?;
    }
    Ok(out)
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_owned(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Sets one field from its textual form. Keys use underscores; dashes
    /// are accepted too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let k = key.as_str();
        match k {
            "seed" => self.seed = parse(k, value)?,
            "threads" => self.threads = optional(k, value)?,
            "k" => self.k = parse(k, value)?,
            "dedup_threshold" => self.dedup_threshold = parse(k, value)?,
            "kmeans_iters" => self.kmeans_iters = parse(k, value)?,
            "kmeans_tol" => self.kmeans_tol = parse(k, value)?,
            "nli_url" => self.nli_url = Some(value.trim().to_owned()).filter(|s| !s.is_empty()),
            "nli_timeout_ms" => self.nli_timeout_ms = parse(k, value)?,
            "nli_attempts" => self.nli_attempts = parse(k, value)?,
            "fan_out" => self.fan_out = parse(k, value)?,
            "instruction" => self.instruction = value.trim().to_owned(),
            "n" => self.n = parse(k, value)?,
            "queries" => self.queries = parse(k, value)?,
            "prior" => self.prior = parse(k, value)?,
            "synth_kind" => {
                self.synth_kind = SynthKind::parse(value.trim())
                    .ok_or_else(|| bad(k, format!("unknown generator `{}`", value.trim())))?
            }
            "ratio" => self.ratio = parse_ratio(value.trim())?,
            "lr" => self.lr = parse(k, value)?,
            "lr_min" => self.lr_min = parse(k, value)?,
            "weight_decay" => self.weight_decay = parse(k, value)?,
            "batch_size" | "batch" => self.batch_size = parse(k, value)?,
            "epochs" => self.epochs = parse(k, value)?,
            "hidden" => self.hidden = parse(k, value)?,
            "temperature_start" => self.temperature_start = parse(k, value)?,
            "temperature_end" => self.temperature_end = parse(k, value)?,
            "random_phase_fraction" => self.random_phase_fraction = parse(k, value)?,
            "pos_weight" => self.pos_weight = optional(k, value)?,
            "max_history" => self.max_history = optional(k, value)?,
            "task" => self.task = parse(k, value)?,
            "multi_head" => self.multi_head = parse(k, value)?,
            "confidence" => self.confidence = parse(k, value)?,
            "max_queries" => self.max_queries = parse(k, value)?,
            "budgets" => {
                self.budgets = match value.trim() {
                    "" | "auto" => None,
                    v => Some(v.split(',').map(|b| parse(k, b)).collect::<Result<_, _>>()?),
                }
            }
            "alpha" => self.alpha = parse(k, value)?,
            "epsilon" => self.epsilon = parse(k, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    /// Applies every `INFOPURSUIT_<KEY>` pair, in sorted key order.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|s| (s.to_ascii_lowercase(), v)))
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(bad(key, msg)) };
        check(self.threads != Some(0), "threads", "must be at least 1")?;
        check(self.k >= 1, "k", "must be at least 1")?;
        check(
            self.dedup_threshold > -1.0 && self.dedup_threshold <= 1.0,
            "dedup_threshold",
            "must lie in (-1, 1]",
        )?;
        check(self.kmeans_iters >= 1, "kmeans_iters", "must be at least 1")?;
        check(self.nli_attempts >= 1, "nli_attempts", "must be at least 1")?;
        check(self.fan_out >= 1, "fan_out", "must be at least 1")?;
        check(self.queries >= 1, "queries", "must be at least 1")?;
        check(self.prior > 0.0 && self.prior < 1.0, "prior", "must lie in (0, 1)")?;
        check(
            self.ratio.iter().all(|w| *w >= 0.0 && w.is_finite()) && self.ratio.iter().sum::<f64>() > 0.0,
            "ratio",
            "weights must be non-negative with a positive sum",
        )?;
        check(self.alpha >= 0.0, "alpha", "must be non-negative")?;
        check(self.epsilon >= 0.0, "epsilon", "must be non-negative")?;
        self.train_config(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.stop_rule().map(|_| ())
    }

    pub fn stop_rule(&self) -> Result<StopRule, ConfigError> {
        let key = if self.max_queries == 0 { "max_queries" } else { "confidence" };
        StopRule::new(self.confidence, self.max_queries).map_err(|e| bad(key, e.to_string()))
    }

    /// Trainer settings; `seed` is the already-derived training seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            lr_min: self.lr_min,
            weight_decay: self.weight_decay,
            hidden: self.hidden,
            temperature_start: self.temperature_start,
            temperature_end: self.temperature_end,
            random_phase_fraction: self.random_phase_fraction,
            pos_weight: self.pos_weight,
            max_history: self.max_history,
            task: self.task,
            multi_head: self.multi_head,
            task_names: Vec::new(),
            seed,
        }
    }

    pub fn bank_config(&self, seed: u64) -> BankConfig {
        BankConfig {
            k: self.k,
            threshold: self.dedup_threshold,
            seed,
            max_iters: self.kmeans_iters,
            tol: self.kmeans_tol,
        }
    }

    pub fn nli_client_config(&self) -> Option<NliClientConfig> {
        self.nli_url.as_ref().map(|url| {
            let mut c = NliClientConfig::new(url.clone());
            c.timeout = Duration::from_millis(self.nli_timeout_ms);
            c.attempts = self.nli_attempts;
            c
        })
    }

    /// Evaluation budgets: the configured list, or a ladder up to `|Q|`.
    pub fn budgets_for(&self, n_queries: usize) -> Vec<usize> {
        let mut b: Vec<usize> = match &self.budgets {
            Some(b) => b.iter().map(|&x| x.min(n_queries)).collect(),
            None => [0, 1, 2, 5, 10, 20, 30, 50, 100, 200]
                .into_iter()
                .filter(|&x| x < n_queries)
                .chain([n_queries])
                .collect(),
        };
        b.sort_unstable();
        b.dedup();
        b
    }
}

/// Per-module seed derived from the root seed.
pub fn module_seed(root: u64, module: &str) -> u64 {
    // FNV-1a over the module name, then one splitmix round
    let tag = module
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut z = root.wrapping_add(tag).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
