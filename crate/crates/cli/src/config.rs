//! Run configuration and its layered resolution.
//!
//! Every setting is a flat `key = value` pair. Layers are applied in the
//! order defaults, config file, `SFAIR_*` environment variables, command-line
//! flags; later layers win. The resolved configuration renders back to the
//! same `key = value` form and is echoed into every output artifact.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sfair::centrality::CentralityKind;
use sfair::fairness::{DEFAULT_MIN_COUNT, DEFAULT_NUM_BINS};
use sfair::models::train::{DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use sfair::models::{
    FusionKind, ModelKind, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM, DEFAULT_H_MAX, DEFAULT_NUM_LAYERS,
};
use sfair::synthetic::{DEFAULT_CHAIN_LEN, DEFAULT_CORE_SIZE, DEFAULT_MIDDLE_PER_CORE};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "SFAIR_";
pub const DEFAULT_TRAIN_RATIO: f64 = 0.9;
pub const DEFAULT_LINE: f64 = 0.5;
pub const DEFAULT_SEEDS: usize = 5;

/// Grid axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Hops,
    Line,
    Fusion,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Hops => "hops",
            SweepAxis::Line => "line",
            SweepAxis::Fusion => "fusion",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hops" | "hop" | "h" => Ok(SweepAxis::Hops),
            "line" => Ok(SweepAxis::Line),
            "fusion" => Ok(SweepAxis::Fusion),
            other => Err(format!("unknown sweep axis {other:?} (expected hops, line or fusion)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Directory holding `edges.tsv` and `labels.tsv`.
    pub dataset: PathBuf,
    /// Explicit edge file; empty means `<dataset>/edges.tsv`.
    pub edges: PathBuf,
    /// Explicit label file; empty means `<dataset>/labels.tsv`.
    pub labels: PathBuf,
    /// Dataset label used in reports; empty means the dataset directory name.
    pub name: String,
    pub model: ModelKind,
    pub centrality: CentralityKind,
    pub line: f64,
    pub hops: usize,
    pub fusion: FusionKind,
    pub layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Number of consecutive seeds, starting at `seed`, used by sweeps.
    pub seeds: usize,
    pub split: f64,
    pub bins: usize,
    pub min_count: usize,
    pub out: PathBuf,
    /// Checkpoint read by `audit`; empty means `<out>/checkpoint.bin`.
    pub checkpoint: PathBuf,
    /// Baseline report JSON for improvement columns; empty for none.
    pub baseline: PathBuf,
    pub axis: Option<SweepAxis>,
    /// Comma-separated grid values; empty means the axis default grid.
    pub values: String,
    /// Use the generated three-group graph instead of a dataset (`expand`).
    pub synthetic: bool,
    /// Write the two-clique fixture instead of the three-group graph (`synth`).
    pub fixture: bool,
    pub core_size: usize,
    pub middle_per_core: usize,
    pub chain_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("data/cora"),
            edges: PathBuf::new(),
            labels: PathBuf::new(),
            name: String::new(),
            model: ModelKind::Sfair,
            centrality: CentralityKind::Closeness,
            line: DEFAULT_LINE,
            hops: DEFAULT_H_MAX,
            fusion: FusionKind::Max,
            layers: DEFAULT_NUM_LAYERS,
            hidden: DEFAULT_HIDDEN_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            dropout: 0.0,
            epochs: DEFAULT_EPOCHS,
            lr: DEFAULT_LEARNING_RATE,
            weight_decay: 0.0,
            seed: 0,
            seeds: DEFAULT_SEEDS,
            split: DEFAULT_TRAIN_RATIO,
            bins: DEFAULT_NUM_BINS,
            min_count: DEFAULT_MIN_COUNT,
            out: PathBuf::from("out"),
            checkpoint: PathBuf::new(),
            baseline: PathBuf::new(),
            axis: None,
            values: String::new(),
            synthetic: false,
            fixture: false,
            core_size: DEFAULT_CORE_SIZE,
            middle_per_core: DEFAULT_MIDDLE_PER_CORE,
            chain_len: DEFAULT_CHAIN_LEN,
        }
    }
}

/// All recognised keys, in rendering order.
pub const KEYS: &[&str] = &[
    "dataset",
    "edges",
    "labels",
    "name",
    "model",
    "centrality",
    "line",
    "hops",
    "fusion",
    "layers",
    "hidden",
    "embed_dim",
    "dropout",
    "epochs",
    "lr",
    "weight_decay",
    "seed",
    "seeds",
    "split",
    "bins",
    "min_count",
    "out",
    "checkpoint",
    "baseline",
    "axis",
    "values",
    "synthetic",
    "fixture",
    "core_size",
    "middle_per_core",
    "chain_len",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("bad value {value:?} for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("bad value {value:?} for {key}: expected true or false"))),
    }
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = PathBuf::from(v),
            "edges" => self.edges = PathBuf::from(v),
            "labels" => self.labels = PathBuf::from(v),
            "name" => self.name = v.to_string(),
            "model" => self.model = parse(key, v)?,
            "centrality" => self.centrality = parse(key, v)?,
            "line" => self.line = parse(key, v)?,
            "hops" => self.hops = parse(key, v)?,
            "fusion" => self.fusion = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "seeds" => self.seeds = parse(key, v)?,
            "split" => self.split = parse(key, v)?,
            "bins" => self.bins = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "baseline" => self.baseline = PathBuf::from(v),
            "axis" => self.axis = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "values" => self.values = v.to_string(),
            "synthetic" => self.synthetic = parse_bool(key, v)?,
            "fixture" => self.fixture = parse_bool(key, v)?,
            "core_size" => self.core_size = parse(key, v)?,
            "middle_per_core" => self.middle_per_core = parse(key, v)?,
            "chain_len" => self.chain_len = parse(key, v)?,
            other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dataset" => path_str(&self.dataset),
            "edges" => path_str(&self.edges),
            "labels" => path_str(&self.labels),
            "name" => self.name.clone(),
            "model" => self.model.to_string(),
            "centrality" => self.centrality.to_string(),
            "line" => self.line.to_string(),
            "hops" => self.hops.to_string(),
            "fusion" => self.fusion.to_string(),
            "layers" => self.layers.to_string(),
            "hidden" => self.hidden.to_string(),
            "embed_dim" => self.embed_dim.to_string(),
            "dropout" => self.dropout.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "split" => self.split.to_string(),
            "bins" => self.bins.to_string(),
            "min_count" => self.min_count.to_string(),
            "out" => path_str(&self.out),
            "checkpoint" => path_str(&self.checkpoint),
            "baseline" => path_str(&self.baseline),
            "axis" => self.axis.map(|a| a.to_string()).unwrap_or_default(),
            "values" => self.values.clone(),
            "synthetic" => self.synthetic.to_string(),
            "fixture" => self.fixture.to_string(),
            "core_size" => self.core_size.to_string(),
            "middle_per_core" => self.middle_per_core.to_string(),
            "chain_len" => self.chain_len.to_string(),
            _ => return None,
        })
    }

    /// `(key, value)` for every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|&k| (k, self.get(k).expect("every key renders"))).collect()
    }

    /// The resolved configuration as a config file.
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn edges_path(&self) -> PathBuf {
        if self.edges.as_os_str().is_empty() {
            self.dataset.join("edges.tsv")
        } else {
            self.edges.clone()
        }
    }

    pub fn labels_path(&self) -> PathBuf {
        if self.labels.as_os_str().is_empty() {
            self.dataset.join("labels.tsv")
        } else {
            self.labels.clone()
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.as_os_str().is_empty() {
            self.out.join("checkpoint.bin")
        } else {
            self.checkpoint.clone()
        }
    }

    pub fn dataset_name(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        self.dataset
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string())
    }

    /// Layer count and width as per-layer output dims of the hidden layers.
    /// The classifier head follows the last one.
    pub fn hidden_dims(&self) -> Vec<usize> {
        vec![self.hidden; self.layers]
    }

    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.hops == 0 {
            return bad("hops must be at least 1".into());
        }
        if self.layers == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return bad("layers, hidden and embed_dim must be positive".into());
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} outside (0, 1)", self.split));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !self.line.is_finite() {
            return bad(format!("line {} is not finite", self.line));
        }
        if self.bins < 2 {
            return bad(format!("bins must be at least 2, got {}", self.bins));
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        Ok(())
    }
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// skipped.
pub fn parse_config_text(text: &str, source: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{source}:{}: expected `key = value`, got {line:?}", idx + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text, &path.display().to_string())
}

/// `SFAIR_<KEY>` overrides from an environment snapshot.
pub fn env_overrides<I>(vars: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            KEYS.contains(&key.as_str()).then_some((key, v))
        })
        .collect();
    pairs.sort();
    pairs
}

/// The three override layers of one invocation, kept apart so a command can
/// re-apply them over a different base (`audit` starts from the values stored
/// in a checkpoint).
#[derive(Debug, Clone, Default)]
pub struct Layers {
    pub file: Option<PathBuf>,
    pub env: Vec<(String, String)>,
    pub flags: Vec<(String, String)>,
}

impl Layers {
    pub fn from_flags(flags: Vec<(String, String)>) -> Self {
        Layers {
            flags,
            ..Layers::default()
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        self.apply_over(RunConfig::default())
    }

    pub fn apply_over(&self, mut cfg: RunConfig) -> Result<RunConfig, CliError> {
        if let Some(path) = &self.file {
            cfg.apply(&read_config_file(path)?)?;
        }
        cfg.apply(&self.env)?;
        cfg.apply(&self.flags)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("line", "0.3").unwrap();
        cfg.set("axis", "fusion").unwrap();
        cfg.set("fusion", "avg").unwrap();
        let back = {
            let mut c = RunConfig::default();
            c.apply(&parse_config_text(&cfg.render(), "x").unwrap()).unwrap();
            c
        };
        assert_eq!(back, cfg);
        assert_eq!(cfg.entries().len(), KEYS.len());
    }

    #[test]
    fn precedence_is_flag_env_file_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\nepochs = 7\nseed = 3\nlr = 0.1\n").unwrap();
        let env = env_overrides(pairs(&[("SFAIR_SEED", "4"), ("SFAIR_LR", "0.2"), ("OTHER", "x")]));
        let layers = Layers {
            file: Some(path),
            env,
            flags: pairs(&[("lr", "0.3")]),
        };
        let cfg = layers.resolve().unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.lr, 0.3);
        assert_eq!(cfg.hops, DEFAULT_H_MAX);
    }

    #[test]
    fn unknown_env_keys_are_ignored() {
        assert!(env_overrides(pairs(&[("SFAIR_NOPE", "1")])).is_empty());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("hops", "x"), Err(CliError::Usage(_))));
        assert!(matches!(cfg.set("nope", "1"), Err(CliError::Usage(_))));
        assert!(parse_config_text("just words", "f").is_err());
        cfg.hops = 0;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn derived_paths() {
        let mut cfg = RunConfig::default();
        cfg.set("dataset", "data/citeseer").unwrap();
        assert_eq!(cfg.edges_path(), PathBuf::from("data/citeseer/edges.tsv"));
        assert_eq!(cfg.dataset_name(), "citeseer");
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("out/checkpoint.bin"));
    }
}
