//! Run configuration: `key = value` files with dotted section keys,
//! overridable per key from the command line.
//!
//! ```text
//! # comment
//! seed = 42
//! model.variant = "FULL"
//! train.batch_size = 4096
//! ```
//!
//! Values are JSON scalars; a bare word that is not valid JSON is taken as a
//! string, and `null` clears an optional setting.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{FilterConfig, InstanceConfig, ParseConfig};
use crate::error::{Error, Result};
use crate::evaluator::EvalMode;
use crate::itemgraph::GraphConfig;
use crate::model::{ModelConfig, Variant};
use crate::trainer::{AdamConfig, RegMode, TrainConfig};
use crate::Precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub user_col: String,
    pub item_col: String,
    pub rating_col: Option<String>,
    pub time_col: String,
    pub delimiter: String,
    pub has_header: bool,
    pub max_malformed: usize,
    pub rating_threshold: Option<f64>,
    pub min_count: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let p = ParseConfig::default();
        let f = FilterConfig::default();
        DataSection {
            user_col: p.user_col,
            item_col: p.item_col,
            rating_col: p.rating_col,
            time_col: p.time_col,
            delimiter: (p.delimiter as char).to_string(),
            has_header: p.has_header,
            max_malformed: p.max_malformed,
            rating_threshold: f.rating_threshold,
            min_count: f.min_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    pub attention_rows: usize,
    pub memory_units: usize,
    pub window_len: usize,
    pub target_len: usize,
    pub stride: usize,
    pub max_history: usize,
    pub lookahead: usize,
    pub symmetric_graph: bool,
    pub variant: Variant,
    pub precision: Precision,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            dim: m.dim,
            attention_rows: m.attention_rows,
            memory_units: m.memory_units,
            window_len: m.instances.window_len,
            target_len: m.instances.target_len,
            stride: m.instances.stride,
            max_history: m.instances.max_history,
            lookahead: m.graph.lookahead,
            symmetric_graph: m.graph.symmetric,
            variant: m.variant,
            precision: m.precision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub reg_mode: RegMode,
    pub record_time: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            lambda: t.lambda,
            batch_size: t.batch_size,
            epochs: t.epochs,
            negatives: t.negatives,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            patience: t.patience,
            reg_mode: t.reg_mode,
            record_time: t.record_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    pub split: EvalMode,
    /// Also write `eval_<split>_per_user.csv`.
    pub per_user_csv: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: crate::evaluator::DEFAULT_K,
            split: EvalMode::Test,
            per_user_csv: false,
        }
    }
}

/// Every setting of a run, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: String,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: ".".into(),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{}` is not a section", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown setting `{key}`")))?;
        if i + 1 == parts.len() {
            if slot.is_object() {
                return Err(Error::Config(format!("`{key}` is a section, not a setting")));
            }
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Splits `key = value` (or `key=value`) into its parts.
pub fn split_assignment(line: &str) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected `key = value`, got `{line}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(Error::Config(format!("missing key in `{line}`")));
    }
    Ok((k, v))
}

impl RunConfig {
    /// Applies `key = value` assignments in order; later ones win.
    pub fn apply<'s>(&mut self, assignments: impl IntoIterator<Item = (&'s str, &'s str)>) -> Result<()> {
        let mut tree = serde_json::to_value(&*self)?;
        for (key, raw) in assignments {
            set_path(&mut tree, key, parse_value(raw))?;
        }
        *self = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Parses config-file text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            pairs.push((k, v));
        }
        self.apply(pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every setting as a `key = value` line, sorted by key; reading this
    /// text back yields the same configuration.
    pub fn to_text(&self) -> String {
        let tree = serde_json::to_value(self).expect("config serializes");
        let mut pairs = Vec::new();
        flatten("", &tree, &mut pairs);
        pairs.sort();
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.parse_config()?;
        self.model_config().validate()?;
        self.train_config().validate()?;
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn parse_config(&self) -> Result<ParseConfig> {
        let d = &self.data;
        let delimiter = match d.delimiter.as_bytes() {
            [b] => *b,
            _ => {
                return Err(Error::Config(format!(
                    "data.delimiter must be a single byte, got {:?}",
                    d.delimiter
                )))
            }
        };
        Ok(ParseConfig {
            user_col: d.user_col.clone(),
            item_col: d.item_col.clone(),
            rating_col: d.rating_col.clone(),
            time_col: d.time_col.clone(),
            delimiter,
            has_header: d.has_header,
            max_malformed: d.max_malformed,
        })
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            rating_threshold: self.data.rating_threshold,
            min_count: self.data.min_count,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            dim: m.dim,
            attention_rows: m.attention_rows,
            memory_units: m.memory_units,
            instances: InstanceConfig {
                window_len: m.window_len,
                target_len: m.target_len,
                stride: m.stride,
                max_history: m.max_history,
            },
            graph: GraphConfig {
                lookahead: m.lookahead,
                symmetric: m.symmetric_graph,
            },
            variant: m.variant,
            precision: m.precision,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            lambda: t.lambda,
            batch_size: t.batch_size,
            epochs: t.epochs,
            negatives: t.negatives,
            adam: AdamConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            // separate stream from parameter initialization
            seed: self.seed.wrapping_add(0x5851_f42d_4c95_7f2d),
            patience: t.patience,
            reg_mode: t.reg_mode,
            record_time: t.record_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_reference_settings() {
        let c = RunConfig::default();
        assert_eq!(
            (c.model.dim, c.model.window_len, c.model.target_len, c.model.attention_rows, c.model.memory_units),
            (50, 5, 3, 10, 10)
        );
        assert_eq!((c.train.learning_rate, c.train.lambda, c.train.batch_size), (0.001, 0.001, 4096));
        assert_eq!(c.eval.k, 10);
        c.validate().unwrap();
    }

    #[test]
    fn file_text_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# toy\nseed = 7\nmodel.variant = MF+S\ntrain.batch_size=128\n\ndata.rating_col = null\nmodel.precision = \"f64\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.variant, Variant::MfS);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.data.rating_col, None);
        assert_eq!(c.model.precision, Precision::F64);
        c.apply([("train.batch_size", "64")]).unwrap();
        assert_eq!(c.train.batch_size, 64);
    }

    #[test]
    fn bad_keys_and_values_are_config_errors() {
        let mut c = RunConfig::default();
        for text in ["train.nope = 1", "train = 3", "seed.x = 1", "model.dim = -4", "model.variant = XYZ", "noequals"] {
            assert!(matches!(c.apply_text(text), Err(Error::Config(_))), "{text}");
        }
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply([("model.variant", "MF"), ("data.delimiter", "\"\\t\""), ("out", "runs/a b")]).unwrap();
        assert_eq!(c.data.delimiter, "\t");
        let text = c.to_text();
        assert!(text.contains("train.batch_size = 4096\n"));
        let mut back = RunConfig::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, c);
    }
}
