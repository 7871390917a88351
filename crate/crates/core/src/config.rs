//! Experiment configuration.
//!
//! A config document is a TOML file whose keys are dotted section names, e.g.
//!
//! ```toml
//! seed = 7
//! fed.rounds = 15
//! controller.c_max = 32
//! ```
//!
//! Every key can also be set with a `key=value` override string; overrides win
//! over the file, which wins over defaults. Unknown keys are rejected and the
//! whole config is validated before anything runs. [`ExperimentConfig::echo`]
//! prints the resolved config in the same format.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::fed::{Mode, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    One(Mode),
    All,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelection::One(m) => vec![m],
            ModeSelection::All => Mode::ALL.to_vec(),
        }
    }
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(ModeSelection::All)
        } else {
            s.parse().map(ModeSelection::One)
        }
    }
}

impl fmt::Display for ModeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeSelection::One(m) => m.fmt(f),
            ModeSelection::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    /// Standard deviation of each blob.
    pub spread: f64,
    pub test_fraction: f64,
    /// Size of the server's OOD set.
    pub ood_samples: usize,
    /// Optional CSV dataset replacing the synthetic blobs.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    pub size_cv: f64,
    pub label_alpha: f64,
    pub unlabeled_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub clients: usize,
    pub participants: usize,
    pub rounds: usize,
    pub mode: ModeSelection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub c_min: usize,
    pub c_max: usize,
    pub window: usize,
    pub patience: usize,
    pub tolerance: f64,
    /// Cluster count of the `fixed-cluster` baseline.
    pub fixed_clusters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// Worker threads for client updates; 0 picks the number of CPUs.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub fed: FedConfig,
    pub train: TrainConfig,
    pub controller: ControllerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            trials: 1,
            threads: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig {
                classes: 8,
                dim: 16,
                samples: 4000,
                spread: 1.0,
                test_fraction: 0.2,
                ood_samples: 1000,
                path: None,
            },
            partition: PartitionConfig {
                size_cv: 0.25,
                label_alpha: 1.0,
                unlabeled_fraction: 0.2,
            },
            model: ModelConfig { hidden: vec![32] },
            fed: FedConfig {
                clients: 10,
                participants: 10,
                rounds: 15,
                mode: ModeSelection::One(Mode::FedCompress),
            },
            train: TrainConfig::default(),
            controller: ControllerConfig {
                c_min: 4,
                c_max: 32,
                window: 3,
                patience: 3,
                tolerance: 1e-3,
                fixed_clusters: 15,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.trim()
        .parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|v| parse(key, v)).collect()
}

/// Keys that control how a run executes but never what it computes.
pub const EXECUTION_KEYS: [&str; 2] = ["threads", "out_dir"];

impl ExperimentConfig {
    /// Every accepted key, in echo order.
    pub fn keys() -> Vec<&'static str> {
        Self::default().echo().into_iter().map(|(k, _)| k).collect()
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "seed" => self.seed = parse(key, raw)?,
            "trials" => self.trials = parse(key, raw)?,
            "threads" => self.threads = parse(key, raw)?,
            "out_dir" => self.out_dir = PathBuf::from(raw),
            "data.classes" => self.data.classes = parse(key, raw)?,
            "data.dim" => self.data.dim = parse(key, raw)?,
            "data.samples" => self.data.samples = parse(key, raw)?,
            "data.spread" => self.data.spread = parse(key, raw)?,
            "data.test_fraction" => self.data.test_fraction = parse(key, raw)?,
            "data.ood_samples" => self.data.ood_samples = parse(key, raw)?,
            "data.path" => self.data.path = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            "partition.size_cv" => self.partition.size_cv = parse(key, raw)?,
            "partition.label_alpha" => self.partition.label_alpha = parse(key, raw)?,
            "partition.unlabeled_fraction" => self.partition.unlabeled_fraction = parse(key, raw)?,
            "model.hidden" => self.model.hidden = parse_list(key, raw)?,
            "fed.clients" => self.fed.clients = parse(key, raw)?,
            "fed.participants" => self.fed.participants = parse(key, raw)?,
            "fed.rounds" => self.fed.rounds = parse(key, raw)?,
            "fed.mode" => self.fed.mode = parse(key, raw)?,
            "train.lr_client" => self.train.lr_client = parse(key, raw)?,
            "train.lr_server" => self.train.lr_server = parse(key, raw)?,
            "train.epochs_client" => self.train.epochs_client = parse(key, raw)?,
            "train.epochs_server" => self.train.epochs_server = parse(key, raw)?,
            "train.batch_size" => self.train.batch_size = parse(key, raw)?,
            "train.beta_client" => self.train.beta_client = parse(key, raw)?,
            "train.beta_server" => self.train.beta_server = parse(key, raw)?,
            "train.beta_warmup_epochs" => self.train.beta_warmup_epochs = parse(key, raw)?,
            "train.temperature" => self.train.temperature = parse(key, raw)?,
            "controller.c_min" => self.controller.c_min = parse(key, raw)?,
            "controller.c_max" => self.controller.c_max = parse(key, raw)?,
            "controller.window" => self.controller.window = parse(key, raw)?,
            "controller.patience" => self.controller.patience = parse(key, raw)?,
            "controller.tolerance" => self.controller.tolerance = parse(key, raw)?,
            "controller.fixed_clusters" => self.controller.fixed_clusters = parse(key, raw)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies a TOML document on top of `self`.
    pub fn apply_document(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat)?;
        for (key, value) in flat {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, "override must look like key=value"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Resolved `(key, value)` pairs, values written as TOML literals.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let q = |s: &str| format!("{s:?}");
        let f = |v: f64| format!("{v:?}");
        let hidden = self
            .model
            .hidden
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        vec![
            ("seed", self.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("threads", self.threads.to_string()),
            ("out_dir", q(&self.out_dir.to_string_lossy())),
            ("data.classes", self.data.classes.to_string()),
            ("data.dim", self.data.dim.to_string()),
            ("data.samples", self.data.samples.to_string()),
            ("data.spread", f(self.data.spread)),
            ("data.test_fraction", f(self.data.test_fraction)),
            ("data.ood_samples", self.data.ood_samples.to_string()),
            (
                "data.path",
                q(&self
                    .data
                    .path
                    .as_ref()
                    .map(|p| p.to_string_lossy().into_owned())
                    .unwrap_or_default()),
            ),
            ("partition.size_cv", f(self.partition.size_cv)),
            ("partition.label_alpha", f(self.partition.label_alpha)),
            (
                "partition.unlabeled_fraction",
                f(self.partition.unlabeled_fraction),
            ),
            ("model.hidden", format!("[{hidden}]")),
            ("fed.clients", self.fed.clients.to_string()),
            ("fed.participants", self.fed.participants.to_string()),
            ("fed.rounds", self.fed.rounds.to_string()),
            ("fed.mode", q(&self.fed.mode.to_string())),
            ("train.lr_client", f(self.train.lr_client)),
            ("train.lr_server", f(self.train.lr_server)),
            ("train.epochs_client", self.train.epochs_client.to_string()),
            ("train.epochs_server", self.train.epochs_server.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.beta_client", f(self.train.beta_client)),
            ("train.beta_server", f(self.train.beta_server)),
            (
                "train.beta_warmup_epochs",
                self.train.beta_warmup_epochs.to_string(),
            ),
            ("train.temperature", f(self.train.temperature)),
            ("controller.c_min", self.controller.c_min.to_string()),
            ("controller.c_max", self.controller.c_max.to_string()),
            ("controller.window", self.controller.window.to_string()),
            ("controller.patience", self.controller.patience.to_string()),
            ("controller.tolerance", f(self.controller.tolerance)),
            (
                "controller.fixed_clusters",
                self.controller.fixed_clusters.to_string(),
            ),
        ]
    }

    pub fn echo_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.path.is_none() {
            if d.classes < 2 {
                return Err(Error::config("data.classes", "must be at least 2"));
            }
            if d.dim == 0 {
                return Err(Error::config("data.dim", "must be at least 1"));
            }
            if d.samples < d.classes {
                return Err(Error::config(
                    "data.samples",
                    format!("{} samples cannot cover {} classes", d.samples, d.classes),
                ));
            }
        }
        if !(d.spread >= 0.0 && d.spread.is_finite()) {
            return Err(Error::config(
                "data.spread",
                format!("must be non-negative, got {}", d.spread),
            ));
        }
        if !(0.0..1.0).contains(&d.test_fraction) {
            return Err(Error::config(
                "data.test_fraction",
                format!("must lie in [0, 1), got {}", d.test_fraction),
            ));
        }
        if d.ood_samples == 0 {
            return Err(Error::config("data.ood_samples", "must be at least 1"));
        }
        let p = &self.partition;
        if !(p.size_cv >= 0.0 && p.size_cv.is_finite()) {
            return Err(Error::config(
                "partition.size_cv",
                format!("must be non-negative, got {}", p.size_cv),
            ));
        }
        if p.label_alpha.is_nan() || p.label_alpha <= 0.0 {
            return Err(Error::config(
                "partition.label_alpha",
                format!("must be positive, got {}", p.label_alpha),
            ));
        }
        if !(p.unlabeled_fraction > 0.0 && p.unlabeled_fraction < 1.0) {
            return Err(Error::config(
                "partition.unlabeled_fraction",
                format!("must lie in (0, 1), got {}", p.unlabeled_fraction),
            ));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(Error::config(
                "model.hidden",
                "needs at least one hidden layer, all sizes positive",
            ));
        }
        let f = &self.fed;
        if f.clients == 0 {
            return Err(Error::config("fed.clients", "must be at least 1"));
        }
        if f.participants == 0 || f.participants > f.clients {
            return Err(Error::config(
                "fed.participants",
                format!(
                    "must lie in [1, fed.clients = {}], got {}",
                    f.clients, f.participants
                ),
            ));
        }
        if f.rounds == 0 {
            return Err(Error::config("fed.rounds", "must be at least 1"));
        }
        self.train.validate()?;
        let c = &self.controller;
        if c.c_min == 0 {
            return Err(Error::config("controller.c_min", "must be at least 1"));
        }
        if c.c_min > c.c_max {
            return Err(Error::config(
                "controller.c_min",
                format!(
                    "controller.c_min ({}) exceeds controller.c_max ({})",
                    c.c_min, c.c_max
                ),
            ));
        }
        if c.window == 0 {
            return Err(Error::config("controller.window", "must be at least 1"));
        }
        if c.patience == 0 {
            return Err(Error::config("controller.patience", "must be at least 1"));
        }
        if !(c.tolerance >= 0.0 && c.tolerance.is_finite()) {
            return Err(Error::config(
                "controller.tolerance",
                format!("must be non-negative, got {}", c.tolerance),
            ));
        }
        if c.fixed_clusters == 0 {
            return Err(Error::config(
                "controller.fixed_clusters",
                "must be at least 1",
            ));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        Ok(())
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let text = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::Integer(n) => Ok(n.to_string()),
                    other => Err(Error::config(
                        &key,
                        format!("unsupported list item {other}"),
                    )),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            toml::Value::Datetime(_) => {
                return Err(Error::config(&key, "datetimes are not supported"))
            }
        };
        out.push((key, text));
    }
    Ok(())
}

/// Defaults, then the optional file, then overrides; validated.
pub fn parse_config<S: AsRef<str>>(
    path: Option<&Path>,
    overrides: &[S],
) -> Result<ExperimentConfig> {
    parse_config_from(ExperimentConfig::default(), path, overrides)
}

pub fn parse_config_from<S: AsRef<str>>(
    base: ExperimentConfig,
    path: Option<&Path>,
    overrides: &[S],
) -> Result<ExperimentConfig> {
    let mut cfg = base;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)?;
        cfg.apply_document(&text)?;
    }
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_document("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.fed.rounds, 15);
        assert_eq!(cfg.fed.clients, 10);
        assert_eq!((cfg.controller.c_min, cfg.controller.c_max), (4, 32));
        assert_eq!((cfg.controller.window, cfg.controller.patience), (3, 3));
        assert_eq!(cfg.train.temperature, 3.0);
        assert_eq!((cfg.train.epochs_client, cfg.train.epochs_server), (10, 10));
    }

    #[test]
    fn inverted_bounds_name_both_values() {
        let err = parse_config(None, &["controller.c_min=40"]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("40") && msg.contains("32"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_document("fed.roundz = 3").unwrap_err();
        assert!(err.to_string().contains("fed.roundz"));
        assert!(cfg.apply_overrides(&["nope=1"]).is_err());
    }

    #[test]
    fn overrides_beat_the_document() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "[fed]\nrounds = 20\nmode = \"fedavg\"\n[model]\nhidden = [24, 12]\n",
        )
        .unwrap();
        let cfg = parse_config(Some(&p), &["fed.rounds=5"]).unwrap();
        assert_eq!(cfg.fed.rounds, 5);
        assert_eq!(cfg.fed.mode, ModeSelection::One(Mode::FedAvg));
        assert_eq!(cfg.model.hidden, vec![24, 12]);
        assert!(cfg.echo_text().contains("fed.rounds = 5\n"));
    }

    #[test]
    fn echo_reparses_to_the_same_config() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(&["data.spread=0.3", "model.hidden=8,4", "fed.mode=all"])
            .unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_document(&cfg.echo_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_values_name_the_field() {
        for (o, field) in [
            ("train.beta_warmup_epochs=10", "train.beta_warmup_epochs"),
            ("train.temperature=0", "train.temperature"),
            ("fed.participants=11", "fed.participants"),
            ("fed.mode=fedzip", "fed.mode"),
            ("fed.rounds=abc", "fed.rounds"),
        ] {
            let err = parse_config(None, &[o]).unwrap_err();
            assert!(err.to_string().contains(field), "{o}: {err}");
        }
    }
}
