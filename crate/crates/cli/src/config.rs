//! Flat `key = value` run configuration shared by the explain and benchmark commands.

use std::path::PathBuf;

use laplace_core::{Error, Result};

/// Every recognized key with its default, as shown by `--help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data", "", "single CSV, split into train/test"),
    ("train", "", "training CSV (with `test`)"),
    ("test", "", "test CSV (with `train`)"),
    (
        "network",
        "",
        "network to sample data from when no CSV is given (`alarm` or a JSON path)",
    ),
    ("rows", "10000", "rows sampled from `network`"),
    ("target", "", "class column"),
    ("samples", "5000", "perturbed rows per explanation"),
    ("rho", "0.5", "per-feature resample probability"),
    ("alpha", "0.001", "CI test significance level"),
    (
        "max_cond",
        "3",
        "largest conditioning set in blanket search",
    ),
    ("max_parents", "3", "parent cap in structure search"),
    ("smoothing", "0.5", "CPT pseudo-count"),
    (
        "rows_per_cell",
        "5",
        "rows per degree of freedom for a reliable CI test",
    ),
    ("bins", "20", "equal-width bins for numeric columns"),
    ("split", "0.8", "training fraction"),
    ("repetitions", "100", "benchmark runs"),
    ("seed", "0", "master seed"),
    ("sensitive", "", "comma-separated feature names to flag"),
    (
        "model",
        "rf",
        "rf | nb | linear | external | path to a saved model JSON",
    ),
    ("model_command", "", "command for `model = external`"),
    ("trees", "100", "random forest size"),
    (
        "max_depth",
        "",
        "random forest depth limit (empty = unlimited)",
    ),
    ("nb_smoothing", "1", "naive Bayes pseudo-count"),
    ("l2", "0.001", "linear model penalty"),
    ("epochs", "300", "linear model epochs"),
    ("instance", "0", "test row to explain"),
    ("out", "laplace-out", "output directory"),
    ("threads", "", "worker threads (empty = all cores)"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub network: Option<String>,
    pub rows: usize,
    pub target: Option<String>,
    pub samples: usize,
    pub rho: f64,
    pub alpha: f64,
    pub max_cond: usize,
    pub max_parents: usize,
    pub smoothing: f64,
    pub rows_per_cell: f64,
    pub bins: usize,
    pub split: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub sensitive: Vec<String>,
    pub model: String,
    pub model_command: Option<String>,
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub nb_smoothing: f64,
    pub l2: f64,
    pub epochs: usize,
    pub instance: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            data: None,
            train: None,
            test: None,
            network: None,
            rows: 0,
            target: None,
            samples: 0,
            rho: 0.0,
            alpha: 0.0,
            max_cond: 0,
            max_parents: 0,
            smoothing: 0.0,
            rows_per_cell: 0.0,
            bins: 0,
            split: 0.0,
            repetitions: 0,
            seed: 0,
            sensitive: Vec::new(),
            model: String::new(),
            model_command: None,
            trees: 0,
            max_depth: None,
            nb_smoothing: 0.0,
            l2: 0.0,
            epochs: 0,
            instance: 0,
            out: PathBuf::new(),
            threads: None,
        };
        for (key, default, _) in KEYS {
            cfg.set(key, default).expect("defaults parse");
        }
        cfg
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl RunConfig {
    /// Sets one key. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "data" => self.data = optional(value).map(PathBuf::from),
            "train" => self.train = optional(value).map(PathBuf::from),
            "test" => self.test = optional(value).map(PathBuf::from),
            "network" => self.network = optional(value),
            "rows" => self.rows = parse(&key, value)?,
            "target" => self.target = optional(value),
            "samples" | "n" => self.samples = parse(&key, value)?,
            "rho" => self.rho = parse(&key, value)?,
            "alpha" => self.alpha = parse(&key, value)?,
            "max_cond" => self.max_cond = parse(&key, value)?,
            "max_parents" => self.max_parents = parse(&key, value)?,
            "smoothing" => self.smoothing = parse(&key, value)?,
            "rows_per_cell" => self.rows_per_cell = parse(&key, value)?,
            "bins" => self.bins = parse(&key, value)?,
            "split" => self.split = parse(&key, value)?,
            "repetitions" => self.repetitions = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "sensitive" => {
                self.sensitive = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "model" => self.model = value.to_string(),
            "model_command" => self.model_command = optional(value),
            "trees" => self.trees = parse(&key, value)?,
            "max_depth" => {
                self.max_depth = match optional(value) {
                    Some(v) => Some(parse(&key, &v)?),
                    None => None,
                }
            }
            "nb_smoothing" => self.nb_smoothing = parse(&key, value)?,
            "l2" => self.l2 = parse(&key, value)?,
            "epochs" => self.epochs = parse(&key, value)?,
            "instance" => self.instance = parse(&key, value)?,
            "out" => self.out = PathBuf::from(value),
            "threads" => {
                self.threads = match optional(value) {
                    Some(v) => Some(parse(&key, &v)?),
                    None => None,
                }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat config file: `key = value` lines, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn target(&self) -> Result<&str> {
        self.target
            .as_deref()
            .ok_or_else(|| Error::Config("no target given (`--target` or `target =`)".into()))
    }

    /// Inverse of [`RunConfig::apply_text`]; keys in `KEYS` order.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        let values = [
            path(&self.data),
            path(&self.train),
            path(&self.test),
            self.network.clone().unwrap_or_default(),
            self.rows.to_string(),
            self.target.clone().unwrap_or_default(),
            self.samples.to_string(),
            self.rho.to_string(),
            self.alpha.to_string(),
            self.max_cond.to_string(),
            self.max_parents.to_string(),
            self.smoothing.to_string(),
            self.rows_per_cell.to_string(),
            self.bins.to_string(),
            self.split.to_string(),
            self.repetitions.to_string(),
            self.seed.to_string(),
            self.sensitive.join(","),
            self.model.clone(),
            self.model_command.clone().unwrap_or_default(),
            self.trees.to_string(),
            opt(self.max_depth),
            self.nb_smoothing.to_string(),
            self.l2.to_string(),
            self.epochs.to_string(),
            self.instance.to_string(),
            self.out.display().to_string(),
            opt(self.threads),
        ];
        KEYS.iter()
            .zip(values)
            .map(|((k, _, _), v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// `--help` epilogue listing every key and its default.
/// One-line flag help for `key`, with its default when it has one.
pub fn flag_help(key: &str) -> String {
    match KEYS.iter().find(|(k, _, _)| *k == key) {
        Some((_, "", help)) => help.to_string(),
        Some((_, d, help)) => format!("{help} [default: {d}]"),
        None => String::new(),
    }
}

pub fn keys_help() -> String {
    let mut s = String::from("Config file keys (flat `key = value`; flags override the file):\n");
    for (k, d, help) in KEYS {
        let d = if d.is_empty() { "-" } else { d };
        s.push_str(&format!("  {k:<14} default {d:<12} {help}\n"));
    }
    s.push_str("\nEnvironment: LAPLACE_THREADS mirrors --threads.\n");
    s
}
