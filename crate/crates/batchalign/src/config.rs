//! Run configuration: a flat, human-editable key = value file, with every
//! key overridable by a CLI flag. All randomness flows from the three named
//! seeds (data, train, eval).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::objectives::Method;
use crate::sampler::BatchMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {detail}")]
    BadValue { key: String, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    // Data source: a corpus file, or synthetic generation when absent.
    pub corpus_path: Option<PathBuf>,
    pub synthetic_topics: usize,
    pub synthetic_languages: usize,
    pub synthetic_pool: usize,
    pub noise_rate: f64,
    pub seed_data: u64,

    // Batch composition.
    pub mode: BatchMode,
    /// Samples per batch; 0 means "all eligible languages".
    pub k: usize,
    pub include_anchor: bool,
    pub anchor: Option<String>,
    pub held_out_languages: Vec<String>,

    // Objective.
    pub method: Method,
    pub beta: f64,
    pub lambda: f64,

    // Training.
    pub learning_rate: f64,
    pub epochs: usize,
    /// Anchor-only (k = 1) preference warmup before the alignment phase, the
    /// desk-scale stand-in for an anchor-centric pretrained checkpoint.
    pub warmup_epochs: usize,
    pub equal_update_budget: bool,
    pub adam: bool,
    pub seed_train: u64,

    // Evaluation.
    pub bootstrap_b: usize,
    pub alpha: f64,
    pub mcnemar_alpha: f64,
    pub seed_eval: u64,
    /// Restrict report rows to these languages (anchor always included);
    /// empty means all.
    pub eval_languages: Vec<String>,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_path: None,
            synthetic_topics: 60,
            synthetic_languages: 4,
            synthetic_pool: 12,
            noise_rate: 0.0,
            seed_data: 7,
            mode: BatchMode::Coupled,
            k: 0,
            include_anchor: true,
            anchor: None,
            held_out_languages: Vec::new(),
            method: Method::Orpo,
            beta: 0.1,
            lambda: 0.1,
            learning_rate: 1e-2,
            epochs: 3,
            warmup_epochs: 2,
            equal_update_budget: true,
            adam: false,
            seed_train: 11,
            bootstrap_b: 1000,
            alpha: 0.05,
            mcnemar_alpha: 0.01,
            seed_eval: 13,
            eval_languages: Vec::new(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        detail: e.to_string(),
    })
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl RunConfig {
    /// Applies one key/value setting; shared by the file parser and CLI
    /// flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "corpus_path" => self.corpus_path = Some(PathBuf::from(value)),
            "synthetic_topics" => self.synthetic_topics = parse(key, value)?,
            "synthetic_languages" => self.synthetic_languages = parse(key, value)?,
            "synthetic_pool" => self.synthetic_pool = parse(key, value)?,
            "noise_rate" => self.noise_rate = parse(key, value)?,
            "seed_data" => self.seed_data = parse(key, value)?,
            "mode" => {
                self.mode = match value {
                    "coupled" => BatchMode::Coupled,
                    "uncoupled" => BatchMode::Uncoupled,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            detail: format!("{other:?} is not coupled|uncoupled"),
                        })
                    }
                }
            }
            "k" => self.k = parse(key, value)?,
            "include_anchor" => self.include_anchor = parse(key, value)?,
            "anchor" => self.anchor = Some(value.to_string()),
            "held_out_langs" => self.held_out_languages = parse_list(value),
            "method" => {
                self.method = match value {
                    "dpo" => Method::Dpo,
                    "orpo" => Method::Orpo,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            detail: format!("{other:?} is not dpo|orpo"),
                        })
                    }
                }
            }
            "beta" => self.beta = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "lr" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "equal_update_budget" => self.equal_update_budget = parse(key, value)?,
            "adam" => self.adam = parse(key, value)?,
            "seed_train" => self.seed_train = parse(key, value)?,
            "bootstrap_b" => self.bootstrap_b = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "mcnemar_alpha" => self.mcnemar_alpha = parse(key, value)?,
            "seed_eval" => self.seed_eval = parse(key, value)?,
            "eval_langs" => self.eval_languages = parse_list(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Blank lines and '#' comments are
    /// ignored.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Flat echo of every setting, for manifests and arm diffing.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert(
            "corpus_path".into(),
            self.corpus_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "synthetic".into()),
        );
        m.insert("synthetic_topics".into(), self.synthetic_topics.to_string());
        m.insert(
            "synthetic_languages".into(),
            self.synthetic_languages.to_string(),
        );
        m.insert("synthetic_pool".into(), self.synthetic_pool.to_string());
        m.insert("noise_rate".into(), self.noise_rate.to_string());
        m.insert("seed_data".into(), self.seed_data.to_string());
        m.insert("mode".into(), self.mode.to_string());
        m.insert("k".into(), self.k.to_string());
        m.insert("include_anchor".into(), self.include_anchor.to_string());
        m.insert(
            "anchor".into(),
            self.anchor.clone().unwrap_or_else(|| "auto".into()),
        );
        m.insert("held_out_langs".into(), self.held_out_languages.join(","));
        m.insert("method".into(), self.method.to_string());
        m.insert("beta".into(), self.beta.to_string());
        m.insert("lambda".into(), self.lambda.to_string());
        m.insert("lr".into(), self.learning_rate.to_string());
        m.insert("epochs".into(), self.epochs.to_string());
        m.insert("warmup_epochs".into(), self.warmup_epochs.to_string());
        m.insert(
            "equal_update_budget".into(),
            self.equal_update_budget.to_string(),
        );
        m.insert("adam".into(), self.adam.to_string());
        m.insert("seed_train".into(), self.seed_train.to_string());
        m.insert("bootstrap_b".into(), self.bootstrap_b.to_string());
        m.insert("alpha".into(), self.alpha.to_string());
        m.insert("mcnemar_alpha".into(), self.mcnemar_alpha.to_string());
        m.insert("seed_eval".into(), self.seed_eval.to_string());
        m.insert("eval_langs".into(), self.eval_languages.join(","));
        m.insert("out_dir".into(), self.out_dir.display().to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_key_value_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nmode = uncoupled\nk = 3\nlr = 0.005\nheld_out_langs = p3, p2\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.mode, BatchMode::Uncoupled);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.learning_rate, 0.005);
        assert_eq!(cfg.held_out_languages, vec!["p3", "p2"]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("mystery", "1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            cfg.set("epochs", "three"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            cfg.set("mode", "sideways"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn echo_maps_differ_only_in_changed_keys() {
        let base = RunConfig::default().to_map();
        let mut other = RunConfig::default();
        other.set("mode", "uncoupled").unwrap();
        let other = other.to_map();
        let diff: Vec<&String> = base
            .iter()
            .filter(|(k, v)| other.get(*k) != Some(*v))
            .map(|(k, _)| k)
            .collect();
        assert_eq!(diff, vec!["mode"]);
    }
}
