//! Parameter checkpoint file.
//!
//! Layout: a text header (magic line, then `key = value` config lines,
//! then `weights = <count>`), followed immediately by `count` raw
//! little-endian f32 values in parameter declaration order. Weights are
//! narrowed to single precision on save.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::params::ModelParams;
use super::{InputMode, ModelConfig, Variant};

const MAGIC: &str = "streamformer-checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub fn save_checkpoint(config: &ModelConfig, params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "variant = {}", config.variant.name())?;
    writeln!(w, "width = {}", config.width)?;
    writeln!(w, "depth = {}", config.depth)?;
    writeln!(w, "heads = {}", config.num_query_heads)?;
    writeln!(w, "key_dim = {}", config.key_dim)?;
    writeln!(w, "value_dim = {}", config.value_dim)?;
    writeln!(w, "window = {}", config.window)?;
    writeln!(w, "classes = {}", config.num_classes)?;
    writeln!(w, "feature_dim = {}", config.feature_dim)?;
    let mode = match config.input_mode {
        InputMode::Features => "features",
        InputMode::LearnedConstant => "learned_constant",
    };
    writeln!(w, "input_mode = {mode}")?;
    writeln!(w, "weights = {}", params.num_weights())?;
    let mut io_err = None;
    params.visit(|_, t| {
        if io_err.is_some() {
            return;
        }
        for &v in &t.data {
            if let Err(e) = w.write_all(&(v as f32).to_le_bytes()) {
                io_err = Some(e);
                return;
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

fn read_line(r: &mut impl Read) -> Result<String, CheckpointError> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(CheckpointError::Format("unexpected end of header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
    }
    String::from_utf8(line).map_err(|_| CheckpointError::Format("header is not utf-8".into()))
}

fn parse_kv(line: &str) -> Result<(&str, &str), CheckpointError> {
    line.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| CheckpointError::Format(format!("expected `key = value`, got `{line}`")))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_line(&mut r)?;
    if magic != MAGIC {
        return Err(CheckpointError::Format(format!("bad magic line `{magic}`")));
    }

    let mut variant = None;
    let mut input_mode = InputMode::Features;
    let mut fields: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let declared_weights;
    loop {
        let line = read_line(&mut r)?;
        let (key, value) = parse_kv(&line)?;
        match key {
            "variant" => {
                variant = Some(match value {
                    "pi" => Variant::Pi,
                    "two_token" => Variant::TwoToken,
                    other => return Err(CheckpointError::Format(format!("unknown variant `{other}`"))),
                });
            }
            "input_mode" => {
                input_mode = match value {
                    "features" => InputMode::Features,
                    "learned_constant" => InputMode::LearnedConstant,
                    other => return Err(CheckpointError::Format(format!("unknown input_mode `{other}`"))),
                };
            }
            "weights" => {
                declared_weights = value
                    .parse::<usize>()
                    .map_err(|_| CheckpointError::Format(format!("bad weight count `{value}`")))?;
                break;
            }
            other => {
                let parsed = value
                    .parse::<usize>()
                    .map_err(|_| CheckpointError::Format(format!("bad value for `{other}`: `{value}`")))?;
                fields.insert(other.to_string(), parsed);
            }
        }
    }

    let get = |name: &str| -> Result<usize, CheckpointError> {
        fields
            .get(name)
            .copied()
            .ok_or_else(|| CheckpointError::Format(format!("missing header field `{name}`")))
    };
    let config = ModelConfig {
        variant: variant.ok_or_else(|| CheckpointError::Format("missing header field `variant`".into()))?,
        width: get("width")?,
        depth: get("depth")?,
        num_query_heads: get("heads")?,
        key_dim: get("key_dim")?,
        value_dim: get("value_dim")?,
        window: get("window")?,
        num_classes: get("classes")?,
        feature_dim: get("feature_dim")?,
        input_mode,
    };

    let mut params = ModelParams::zeros(&config);
    let expected = params.num_weights();
    if declared_weights != expected {
        return Err(CheckpointError::Format(format!(
            "header declares {declared_weights} weights, config implies {expected}"
        )));
    }
    let mut bytes = vec![0u8; expected * 4];
    r.read_exact(&mut bytes).map_err(|e| {
        CheckpointError::Format(format!("weight payload truncated ({expected} floats expected): {e}"))
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Format("trailing bytes after weight payload".into()));
    }
    let mut offset = 0;
    for t in params.tensors_mut() {
        for v in t.data.iter_mut() {
            let raw = [bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]];
            *v = f32::from_le_bytes(raw) as f64;
            offset += 4;
        }
    }
    Ok((config, params))
}
