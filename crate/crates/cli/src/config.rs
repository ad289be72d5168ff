//! Run configuration: defaults, an optional JSON document, then dotted
//! `key=value` overrides. Every key must already exist in the schema.

use std::fs;
use std::path::Path;

use criqa_core::datagen::DatagenConfig;
use criqa_core::train::TrainConfig;
use criqa_core::SsimParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub datagen: DatagenConfig,
    pub train: TrainConfig,
    pub ssim: SsimParams,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Parses an override value as JSON, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| err(format!("override `{spec}` is not of the form key=value")))?;
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| err(format!("unknown config key `{key}`: `{}` is not a section", parts[..i].join("."))))?;
        node = obj
            .get_mut(*part)
            .ok_or_else(|| err(format!("unknown config key `{key}`")))?;
    }
    *node = parse_value(raw);
    Ok(())
}

/// Resolves the effective configuration. `seed` replaces both the data
/// generation seed and the training seed.
pub fn resolve(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig, ConfigError> {
    let base = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| err(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| err(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut tree = serde_json::to_value(&base).expect("config serialises");
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(tree).map_err(|e| err(format!("override rejected: {e}")))?;
    if let Some(s) = seed {
        cfg.datagen.global_seed = s;
        cfg.train.seed = s;
    }
    cfg.datagen.validate().map_err(|e| err(e.to_string()))?;
    cfg.train.validate().map_err(|e| err(e.to_string()))?;
    cfg.ssim.validate().map_err(|e| err(e.to_string()))?;
    Ok(cfg)
}
