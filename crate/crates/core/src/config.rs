//! Run configuration: one JSON document holding paths, variant, root seed,
//! and every module's settings. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::SyntheticConfig;
use crate::error::{Error, Result};
use crate::trainer::{TrainConfig, VariantSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// JSONL dataset. When absent, `train` generates the synthetic benchmark.
    pub dataset: Option<PathBuf>,
    /// Vocabulary JSON for `dataset`.
    pub vocabulary: Option<PathBuf>,
    pub out: PathBuf,
    pub variant: String,
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Train / validation / test fractions of subjects.
    pub split: [f64; 3],
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            vocabulary: None,
            out: PathBuf::from("out"),
            variant: "MLL-GCN-CRC".into(),
            seed: 0,
            split: [0.45, 0.27, 0.28],
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    /// Applies `key.path=value` overrides. The value is parsed as JSON when
    /// possible and taken as a string otherwise.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut doc = serde_json::to_value(&self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "expected KEY=VALUE"))?;
            let value: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::config("--set", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        VariantSpec::from_name(&self.variant)?;
        for (i, &f) in self.split.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::config(format!("split[{i}]"), "must be positive"));
            }
        }
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", format!("fractions sum to {total}, not 1")));
        }
        if self.dataset.is_some() && self.vocabulary.is_none() {
            return Err(Error::config("vocabulary", "required when dataset is set"));
        }
        self.synthetic.validate()?;
        self.train.validate()
    }

    pub fn variant_spec(&self) -> Result<VariantSpec> {
        VariantSpec::from_name(&self.variant)
    }

    /// Synthetic settings with the root seed filled in.
    pub fn seeded_synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            ..self.synthetic.clone()
        }
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        match cur {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(Error::config(key, "unknown configuration key"));
                }
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                cur = map.get_mut(*part).expect("checked");
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .ok()
                    .filter(|&i| i < items.len())
                    .ok_or_else(|| Error::config(key, "array index out of range"))?;
                if last {
                    items[idx] = value;
                    return Ok(());
                }
                cur = &mut items[idx];
            }
            _ => return Err(Error::config(key, "cannot descend into a scalar")),
        }
    }
    Err(Error::config(key, "empty key"))
}
