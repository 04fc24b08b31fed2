//! Experiment config files.
//!
//! Flat `key = value` text with dotted sections and `#` comments:
//!
//! ```text
//! model.variant = pi           # pi | two_token
//! model.width = 64
//! model.depth = 2
//! model.heads = 2              # default 1
//! model.key_dim = 32
//! model.value_dim = 32         # default: key_dim
//! model.window = 512           # tokens
//!
//! trainer.streams = 8
//! trainer.chunk_size = 50
//! trainer.alpha0 = 3e-2
//! trainer.learning_rate = 1e-3 # optional; default alpha0 / width
//! trainer.weight_decay = 0.0   # default 0
//! trainer.examples = 50000     # optional; default: full source
//!
//! data.kind = split_blobs      # split_blobs | feature_file
//! data.classes = 47            # blob base classes
//! data.feature_dim = 32
//! data.spread = 0.3
//! data.base_seed = 0           # default 0
//! data.tasks = 100
//! data.task_len = 500
//! data.ways = 10
//! # data.path = feats.oclf     # feature_file kind instead
//!
//! run.output_dir = out
//! run.data_seeds = 0,1,2,3,4   # default 0
//! run.model_seed = 0           # default 0
//! run.ablation = no_image      # optional; no_image | no_attention
//! run.gradient_stop = 25000    # optional position
//! run.checkpoint_every = 10000 # optional
//! ```
//!
//! Unknown keys are errors. The model's class count and feature width are
//! taken from the data source, not the config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::CliError;
use crate::eval::AblationKind;
use crate::model::Variant;

#[derive(Clone, Debug)]
pub struct ModelSettings {
    pub variant: Variant,
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub window: usize,
}

#[derive(Clone, Debug)]
pub struct TrainerSettings {
    pub streams: usize,
    pub chunk_size: usize,
    pub alpha0: f64,
    pub learning_rate: Option<f64>,
    pub weight_decay: f64,
    pub examples: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum DataSettings {
    SplitBlobs {
        classes: usize,
        feature_dim: usize,
        spread: f64,
        base_seed: u64,
        tasks: usize,
        task_len: usize,
        ways: usize,
    },
    FeatureFile { path: PathBuf },
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub output_dir: PathBuf,
    pub data_seeds: Vec<u64>,
    pub model_seed: u64,
    pub ablation: Option<AblationKind>,
    pub gradient_stop: Option<usize>,
    pub checkpoint_every: Option<usize>,
}

/// A parsed and validated experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelSettings,
    pub trainer: TrainerSettings,
    pub data: DataSettings,
    pub run: RunSettings,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::InvalidConfig { field: field.to_string(), reason: reason.into() }
}

/// Raw `key = value` map with typed take-accessors that consume keys.
struct KeyMap {
    values: BTreeMap<String, String>,
}

impl KeyMap {
    fn parse(text: &str) -> Result<KeyMap, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(invalid(
                    &format!("line {}", i + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim().to_string();
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(invalid(&key, "duplicate key"));
            }
        }
        Ok(KeyMap { values })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        let raw = self.take(key).ok_or_else(|| invalid(key, "missing required key"))?;
        raw.parse().map_err(|_| invalid(key, format!("cannot parse `{raw}`")))
    }

    fn optional<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| invalid(key, format!("cannot parse `{raw}`"))),
        }
    }

    fn or_default<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.optional(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(key) = self.values.keys().next() {
            return Err(invalid(key, "unknown key"));
        }
        Ok(())
    }
}

/// Parse a config file, validating field by field.
pub fn parse_experiment_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        context: format!("reading config {}", path.display()),
        source: e,
    })?;
    parse_experiment_text(&text)
}

pub fn parse_experiment_text(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut map = KeyMap::parse(text)?;

    let variant = match map.required::<String>("model.variant")?.as_str() {
        "pi" => Variant::Pi,
        "two_token" => Variant::TwoToken,
        other => return Err(invalid("model.variant", format!("expected pi or two_token, got `{other}`"))),
    };
    let key_dim = map.required("model.key_dim")?;
    let model = ModelSettings {
        variant,
        width: map.required("model.width")?,
        depth: map.required("model.depth")?,
        heads: map.or_default("model.heads", 1)?,
        key_dim,
        value_dim: map.or_default("model.value_dim", key_dim)?,
        window: map.required("model.window")?,
    };
    for (field, value) in [
        ("model.width", model.width),
        ("model.depth", model.depth),
        ("model.heads", model.heads),
        ("model.key_dim", model.key_dim),
        ("model.value_dim", model.value_dim),
    ] {
        if value == 0 {
            return Err(invalid(field, "must be >= 1"));
        }
    }

    let trainer = TrainerSettings {
        streams: map.required("trainer.streams")?,
        chunk_size: map.required("trainer.chunk_size")?,
        alpha0: map.required("trainer.alpha0")?,
        learning_rate: map.optional("trainer.learning_rate")?,
        weight_decay: map.or_default("trainer.weight_decay", 0.0)?,
        examples: map.optional("trainer.examples")?,
    };
    if trainer.streams == 0 {
        return Err(invalid("trainer.streams", "must be >= 1"));
    }
    if trainer.chunk_size == 0 {
        return Err(invalid("trainer.chunk_size", "must be >= 1"));
    }

    let data = match map.required::<String>("data.kind")?.as_str() {
        "split_blobs" => {
            let classes = map.required("data.classes")?;
            let ways = map.required("data.ways")?;
            if ways == 0 {
                return Err(invalid("data.ways", "must be >= 1"));
            }
            if ways > classes {
                return Err(invalid(
                    "data.ways",
                    format!("ways {ways} exceeds data.classes {classes}"),
                ));
            }
            DataSettings::SplitBlobs {
                classes,
                feature_dim: map.required("data.feature_dim")?,
                spread: map.required("data.spread")?,
                base_seed: map.or_default("data.base_seed", 0)?,
                tasks: map.required("data.tasks")?,
                task_len: map.required("data.task_len")?,
                ways,
            }
        }
        "feature_file" => DataSettings::FeatureFile { path: PathBuf::from(map.required::<String>("data.path")?) },
        other => {
            return Err(invalid(
                "data.kind",
                format!("expected split_blobs or feature_file, got `{other}`"),
            ))
        }
    };

    let data_seeds = match map.take("run.data_seeds") {
        None => vec![0],
        Some(raw) => {
            let seeds: Result<Vec<u64>, _> = raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
            let seeds = seeds.map_err(|_| invalid("run.data_seeds", format!("expected comma-separated integers, got `{raw}`")))?;
            if seeds.is_empty() {
                return Err(invalid("run.data_seeds", "need at least one seed"));
            }
            seeds
        }
    };
    let ablation = match map.take("run.ablation") {
        None => None,
        Some(raw) => Some(raw.parse::<AblationKind>().map_err(|e| invalid("run.ablation", e))?),
    };
    let run = RunSettings {
        output_dir: PathBuf::from(map.required::<String>("run.output_dir")?),
        data_seeds,
        model_seed: map.or_default("run.model_seed", 0)?,
        ablation,
        gradient_stop: map.optional("run.gradient_stop")?,
        checkpoint_every: map.optional("run.checkpoint_every")?,
    };

    map.finish()?;
    Ok(ExperimentConfig { model, trainer, data, run })
}

/// Sweep grid: the same keys may list several comma-separated values.
#[derive(Clone, Debug, Default)]
pub struct GridSpec {
    pub width: Option<Vec<usize>>,
    pub depth: Option<Vec<usize>>,
    pub streams: Option<Vec<usize>>,
    pub window: Option<Vec<usize>>,
    pub alpha0: Option<Vec<f64>>,
    pub weight_decay: Option<Vec<f64>>,
}

pub fn parse_grid(path: &Path) -> Result<GridSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        context: format!("reading grid {}", path.display()),
        source: e,
    })?;
    parse_grid_text(&text)
}

fn parse_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError> {
    let items: Result<Vec<T>, _> = raw.split(',').map(|s| s.trim().parse::<T>()).collect();
    let items = items.map_err(|_| invalid(key, format!("cannot parse list `{raw}`")))?;
    if items.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(items)
}

pub fn parse_grid_text(text: &str) -> Result<GridSpec, CliError> {
    let mut map = KeyMap::parse(text)?;
    let mut grid = GridSpec::default();
    if let Some(raw) = map.take("width") {
        grid.width = Some(parse_list("width", &raw)?);
    }
    if let Some(raw) = map.take("depth") {
        grid.depth = Some(parse_list("depth", &raw)?);
    }
    if let Some(raw) = map.take("streams") {
        grid.streams = Some(parse_list("streams", &raw)?);
    }
    if let Some(raw) = map.take("window") {
        grid.window = Some(parse_list("window", &raw)?);
    }
    if let Some(raw) = map.take("alpha0") {
        grid.alpha0 = Some(parse_list("alpha0", &raw)?);
    }
    if let Some(raw) = map.take("weight_decay") {
        grid.weight_decay = Some(parse_list("weight_decay", &raw)?);
    }
    map.finish()?;
    Ok(grid)
}
