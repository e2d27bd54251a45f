//! Flat `key = value` run configuration, presets and overrides.
//!
//! Precedence, lowest first: built-in defaults, the named preset, keys from
//! the config file, then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::check_gamma;
use crate::fsd::{DegreeScope, FsdConfig};
use crate::labels::PropagationConfig;
use crate::masking::MissingMode;
use crate::synthetic::SbmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Zero,
    Fp,
    Fsd,
    FsdCap,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Zero, Method::Fp, Method::Fsd, Method::FsdCap];

    pub fn name(self) -> &'static str {
        match self {
            Method::Zero => "zero",
            Method::Fp => "fp",
            Method::Fsd => "fsd",
            Method::FsdCap => "fsd-cap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown method {s:?}; expected zero, fp, fsd or fsd-cap")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Files,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preset: Option<String>,
    pub source: Source,
    pub graph_path: Option<PathBuf>,
    pub features_path: Option<PathBuf>,
    /// `node,class` pairs: ground truth for evaluation and the pool that
    /// training labels are drawn from.
    pub labels_path: Option<PathBuf>,
    /// Explicit training labels for label propagation.
    pub train_labels_path: Option<PathBuf>,
    /// Per-node class logits from an external classifier.
    pub scores_path: Option<PathBuf>,
    pub mask_path: Option<PathBuf>,
    pub mask_mode: MissingMode,
    pub mr: f64,
    pub seed: u64,
    pub method: Method,
    pub gamma: f64,
    pub lambda: f64,
    pub k: usize,
    pub temperature: f64,
    pub add_self_loops: bool,
    pub convergence_tol: f64,
    pub max_layers: Option<usize>,
    pub degree_scope: DegreeScope,
    pub largest_component: bool,
    pub lp_alpha: f64,
    pub lp_iters: usize,
    /// Share of the labeled pool used to seed label propagation.
    pub label_fraction: f64,
    pub similarity_sample_cap: usize,
    pub sbm: SbmConfig,
    /// `run` only: evaluate every method side by side.
    pub compare: bool,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preset: None,
            source: Source::Files,
            graph_path: None,
            features_path: None,
            labels_path: None,
            train_labels_path: None,
            scores_path: None,
            mask_path: None,
            mask_mode: MissingMode::Structural,
            mr: 0.995,
            seed: 0,
            method: Method::FsdCap,
            gamma: 1.2,
            lambda: 0.2,
            k: 100,
            temperature: 5.0,
            add_self_loops: false,
            convergence_tol: 1e-7,
            max_layers: None,
            degree_scope: DegreeScope::View,
            largest_component: true,
            lp_alpha: 0.9,
            lp_iters: 50,
            label_fraction: 0.1,
            similarity_sample_cap: crate::metrics::DEFAULT_SAMPLE_CAP,
            sbm: SbmConfig::default(),
            compare: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Offsets added to the run seed for each random stream.
pub mod seed_offset {
    pub const MASK: u64 = 0;
    pub const SBM: u64 = 1;
    pub const LABELS: u64 = 2;
    pub const SAMPLING: u64 = 3;
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Param(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Param(format!("invalid value {value:?} for {key}; expected true or false"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn seed_for(&self, offset: u64) -> u64 {
        self.seed.wrapping_add(offset)
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "preset" => {
                let p = find_preset(value)?;
                p.apply(self);
            }
            "source" => {
                self.source = match value {
                    "files" => Source::Files,
                    "synthetic" => Source::Synthetic,
                    _ => return Err(Error::Param(format!("unknown source {value:?}; expected files or synthetic"))),
                }
            }
            "graph" => self.graph_path = optional_path(value),
            "features" => self.features_path = optional_path(value),
            "labels" => self.labels_path = optional_path(value),
            "train_labels" => self.train_labels_path = optional_path(value),
            "scores" => self.scores_path = optional_path(value),
            "mask" => self.mask_path = optional_path(value),
            "mask_mode" | "mode" => self.mask_mode = value.parse()?,
            "mr" => self.mr = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "method" => self.method = value.parse()?,
            "gamma" => self.gamma = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "k" | "K" => self.k = parse(key, value)?,
            "temperature" | "t" | "T" => self.temperature = parse(key, value)?,
            "add_self_loops" => self.add_self_loops = parse_bool(key, value)?,
            "convergence_tol" => self.convergence_tol = parse(key, value)?,
            "max_layers" => {
                self.max_layers = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "degree_scope" => self.degree_scope = value.parse()?,
            "largest_component" => self.largest_component = parse_bool(key, value)?,
            "lp_alpha" => self.lp_alpha = parse(key, value)?,
            "lp_iters" => self.lp_iters = parse(key, value)?,
            "label_fraction" => self.label_fraction = parse(key, value)?,
            "similarity_sample_cap" => self.similarity_sample_cap = parse(key, value)?,
            "sbm_classes" => self.sbm.classes = parse(key, value)?,
            "sbm_nodes" => self.sbm.nodes = parse(key, value)?,
            "sbm_p_in" => self.sbm.p_in = parse(key, value)?,
            "sbm_p_out" => self.sbm.p_out = parse(key, value)?,
            "sbm_feature_dim" => self.sbm.feature_dim = parse(key, value)?,
            "sbm_mean_scale" => self.sbm.mean_scale = parse(key, value)?,
            "sbm_noise_std" => self.sbm.noise_std = parse(key, value)?,
            "compare" => self.compare = parse_bool(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Param(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Builds a config from an optional file plus `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let file_pairs = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_pairs(&text, &path.display().to_string())?
            }
            None => Vec::new(),
        };
        let preset = overrides
            .iter()
            .chain(&file_pairs)
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone());
        let mut cfg = PipelineConfig::default();
        if let Some(p) = preset {
            cfg.set("preset", &p)?;
        }
        for (k, v) in file_pairs.iter().chain(overrides) {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mr) {
            return Err(Error::Param(format!("mr must lie in [0, 1), got {}", self.mr)));
        }
        self.fsd_config().validate()?;
        check_gamma(self.gamma)?;
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Param(format!("T must be positive, got {}", self.temperature)));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(Error::Param(format!("label_fraction must lie in (0, 1], got {}", self.label_fraction)));
        }
        if self.similarity_sample_cap == 0 {
            return Err(Error::Param("similarity_sample_cap must be at least 1".into()));
        }
        if self.source == Source::Synthetic {
            self.sbm.validate()?;
        }
        Ok(())
    }

    pub fn fsd_config(&self) -> FsdConfig {
        FsdConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            k: self.k,
            max_layers: self.max_layers,
            convergence_tol: self.convergence_tol,
            degree_scope: self.degree_scope,
        }
    }

    pub fn propagation_config(&self) -> PropagationConfig {
        PropagationConfig { alpha: self.lp_alpha, iters: self.lp_iters }
    }
}

/// Splits a config document into `(key, value)` pairs. `#` starts a comment.
pub fn parse_pairs(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: no + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    LinkPrediction,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub dataset: String,
    pub task: Task,
    pub mask_mode: MissingMode,
    pub gamma: f64,
    pub lambda: f64,
    pub temperature: f64,
}

impl Preset {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.preset = Some(self.name.clone());
        cfg.mask_mode = self.mask_mode;
        cfg.mr = 0.995;
        cfg.gamma = self.gamma;
        cfg.lambda = self.lambda;
        cfg.temperature = self.temperature;
        if self.task == Task::Synthetic {
            cfg.source = Source::Synthetic;
        }
    }
}

const DATASETS: [&str; 5] = ["cora", "citeseer", "pubmed", "photo", "computers"];

// (gamma, lambda, T) per dataset at a 99.5% missing rate.
const CLS_STRUCTURAL: [(f64, f64, f64); 5] = [(1.2, 0.2, 5.0), (1.2, 0.9, 250.0), (1.6, 0.6, 5.0), (2.8, 0.3, 25.0), (3.8, 0.4, 100.0)];
const CLS_UNIFORM: [(f64, f64, f64); 5] = [(1.2, 0.2, 250.0), (1.2, 0.7, 250.0), (1.2, 0.1, 5.0), (2.8, 0.0, 25.0), (4.0, 0.3, 100.0)];
const LINK_STRUCTURAL: [(f64, f64, f64); 5] = [(1.4, 0.2, 5.0), (1.4, 0.3, 25.0), (1.4, 0.0, 10.0), (4.2, 0.8, 0.001), (5.0, 0.0, 0.001)];
const LINK_UNIFORM: [(f64, f64, f64); 5] = [(1.2, 0.0, 5.0), (1.6, 0.0, 25.0), (1.6, 0.0, 25.0), (4.4, 0.0, 0.01), (5.6, 0.0, 0.001)];

/// Every named preset: `<dataset>-<structural|uniform>-<cls|link>` plus
/// `synthetic`, the setting picked for the built-in block model.
pub fn presets() -> Vec<Preset> {
    let mut out = Vec::new();
    let tables = [
        (Task::Classification, MissingMode::Structural, CLS_STRUCTURAL),
        (Task::Classification, MissingMode::Uniform, CLS_UNIFORM),
        (Task::LinkPrediction, MissingMode::Structural, LINK_STRUCTURAL),
        (Task::LinkPrediction, MissingMode::Uniform, LINK_UNIFORM),
    ];
    for (task, mode, table) in tables {
        for (dataset, (gamma, lambda, temperature)) in DATASETS.iter().zip(table) {
            let task_tag = if task == Task::Classification { "cls" } else { "link" };
            out.push(Preset {
                name: format!("{dataset}-{mode}-{task_tag}"),
                dataset: dataset.to_string(),
                task,
                mask_mode: mode,
                gamma,
                lambda,
                temperature,
            });
        }
    }
    out.push(Preset {
        name: "synthetic".into(),
        dataset: "sbm".into(),
        task: Task::Synthetic,
        mask_mode: MissingMode::Structural,
        gamma: 2.8,
        lambda: 0.0,
        temperature: 25.0,
    });
    out
}

pub fn find_preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Param(format!("unknown preset {name:?}; run `presets` for the list")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn presets_cover_both_tables() {
        let all = presets();
        assert_eq!(all.len(), 21);
        let p = find_preset("cora-structural-cls").unwrap();
        assert_eq!((p.gamma, p.lambda, p.temperature), (1.2, 0.2, 5.0));
        let p = find_preset("photo-structural-link").unwrap();
        assert_eq!((p.gamma, p.lambda, p.temperature), (4.2, 0.8, 0.001));
        let p = find_preset("computers-uniform-cls").unwrap();
        assert_eq!((p.gamma, p.lambda, p.temperature), (4.0, 0.3, 100.0));
        assert!(find_preset("cora").is_err());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\npreset = citeseer-structural-cls\nlambda = 0.5\nK = 7\n").unwrap();
        let cfg = PipelineConfig::load(Some(&path), &[("lambda".into(), "0.1".into())]).unwrap();
        assert_eq!(cfg.gamma, 1.2);
        assert_eq!(cfg.temperature, 250.0);
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.k, 7);
        assert_eq!(cfg.preset.as_deref(), Some("citeseer-structural-cls"));
    }

    #[test]
    fn flag_preset_applies_before_file_keys() {
        let cfg = PipelineConfig::load(None, &[("gamma".into(), "2".into()), ("preset".into(), "synthetic".into())]).unwrap();
        assert_eq!(cfg.gamma, 2.0);
        assert_eq!(cfg.source, Source::Synthetic);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("colour", "blue").is_err());
        assert!(cfg.set("mr", "lots").is_err());
        assert!(cfg.set("method", "magic").is_err());
        for (k, v) in [("mr", "1.0"), ("gamma", "0"), ("lambda", "-0.1"), ("K", "0"), ("T", "0")] {
            let mut cfg = PipelineConfig::default();
            cfg.set(k, v).unwrap();
            let err = cfg.validate().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{k}={v}");
        }
        assert!(matches!(parse_pairs("just words", "x"), Err(Error::Parse { line: 1, .. })));
    }
}
