//! Checkpoint directories: `manifest.json`, `params.bin` and, when the
//! optimiser state is saved, `optim.bin`. Blobs hold little-endian f32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CrossRefModel, ModelConfig, ParamSet};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Seed plus the next step to run; per-step generators are derived from
/// both, so this fully restores the sampling stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_step: u64,
}

/// AdamW moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub t: u64,
    pub m: ParamSet<f32>,
    pub v: ParamSet<f32>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: CrossRefModel<f32>,
    pub step: u64,
    pub rng: RngState,
    pub optim: Option<OptimState>,
    /// Free-form metadata, e.g. the training configuration.
    pub extra: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimEntry {
    t: u64,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    rng_state: RngState,
    params_file: String,
    params_bytes: usize,
    parameters: Vec<ParamEntry>,
    optimizer: Option<OptimEntry>,
    extra: Option<serde_json::Value>,
}

fn blob(sets: &[&ParamSet<f32>]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in sets {
        for v in s.values() {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a checkpoint directory atomically: everything goes to a sibling
/// temporary directory that is renamed into place at the end.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    model: &CrossRefModel<f32>,
    optim: Option<&OptimState>,
    step: u64,
    rng: RngState,
    extra: Option<&serde_json::Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Validation(format!("bad checkpoint path {}", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(if parent.as_os_str().is_empty() {
        Path::new(".")
    } else {
        parent
    })
    .map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let params = model.params();
    let mut parameters = Vec::with_capacity(params.len());
    let mut offset = 0;
    for i in 0..params.len() {
        parameters.push(ParamEntry {
            name: params.names()[i].clone(),
            shape: params.shapes()[i].clone(),
            dtype: "f32".into(),
            offset,
        });
        offset += params.values()[i].len() * 4;
    }
    write_file(&tmp.join("params.bin"), &blob(&[params]))?;
    let optimizer = match optim {
        Some(o) => {
            write_file(&tmp.join("optim.bin"), &blob(&[&o.m, &o.v]))?;
            Some(OptimEntry {
                t: o.t,
                file: "optim.bin".into(),
            })
        }
        None => None,
    };
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        step,
        rng_state: rng,
        params_file: "params.bin".into(),
        params_bytes: offset,
        parameters,
        optimizer,
        extra: extra.cloned(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    json.push('\n');
    write_file(&tmp.join("manifest.json"), json.as_bytes())?;

    let old = parent.join(format!(".{name}.old-{}", std::process::id()));
    if dir.exists() {
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(())
}

fn read_values(bytes: &[u8], base: usize, e: &ParamEntry, path: &Path) -> Result<Vec<f32>> {
    let n: usize = e.shape.iter().product();
    let start = base + e.offset;
    let end = start + n * 4;
    if end > bytes.len() {
        return Err(Error::Checkpoint(format!(
            "parameter {} spans bytes {start}..{end} but {} holds {} bytes",
            e.name,
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes[start..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_set(
    entries: &[ParamEntry],
    bytes: &[u8],
    base: usize,
    path: &Path,
) -> Result<ParamSet<f32>> {
    let mut names = Vec::with_capacity(entries.len());
    let mut shapes = Vec::with_capacity(entries.len());
    let mut values = Vec::with_capacity(entries.len());
    for e in entries {
        values.push(read_values(bytes, base, e, path)?);
        names.push(e.name.clone());
        shapes.push(e.shape.clone());
    }
    Ok(ParamSet::from_parts(names, shapes, values))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if m.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {} is not supported (expected {CHECKPOINT_VERSION})",
            path.display(),
            m.format_version
        )));
    }
    for e in &m.parameters {
        if e.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "parameter {} has dtype {}, only f32 is supported",
                e.name, e.dtype
            )));
        }
    }
    Ok(m)
}

/// Reads a checkpoint directory, validating every parameter span and shape.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let ppath: PathBuf = dir.join(&m.params_file);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    if bytes.len() != m.params_bytes {
        return Err(Error::Checkpoint(format!(
            "{} holds {} bytes, manifest says {}",
            ppath.display(),
            bytes.len(),
            m.params_bytes
        )));
    }
    let params = read_set(&m.parameters, &bytes, 0, &ppath)?;
    let model = CrossRefModel::from_params(m.config.clone(), params)?;
    let optim = match &m.optimizer {
        Some(o) => {
            let path = dir.join(&o.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != 2 * m.params_bytes {
                return Err(Error::Checkpoint(format!(
                    "{} holds {} bytes, expected {}",
                    path.display(),
                    bytes.len(),
                    2 * m.params_bytes
                )));
            }
            Some(OptimState {
                t: o.t,
                m: read_set(&m.parameters, &bytes, 0, &path)?,
                v: read_set(&m.parameters, &bytes, m.params_bytes, &path)?,
            })
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        step: m.step,
        rng: m.rng_state,
        optim,
        extra: m.extra,
    })
}

/// Loads only the model; when `expected` is given the stored configuration
/// must equal it.
pub fn load_model(
    dir: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<CrossRefModel<f32>> {
    let dir = dir.as_ref();
    let ck = load_checkpoint(dir)?;
    if let Some(want) = expected {
        if ck.model.config() != want {
            return Err(Error::Checkpoint(format!(
                "{}: stored model config {:?} does not match requested {:?}",
                dir.display(),
                ck.model.config(),
                want
            )));
        }
    }
    Ok(ck.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::procedural::procedural_base;

    fn tiny() -> CrossRefModel<f32> {
        CrossRefModel::new(ModelConfig::tiny(), 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("ck");
        let m = tiny();
        let optim = OptimState {
            t: 3,
            m: m.params().zeros_like(),
            v: m.params().clone(),
        };
        let rng = RngState {
            seed: 5,
            next_step: 3,
        };
        save_checkpoint(&dir, &m, Some(&optim), 3, rng, None).unwrap();
        // overwriting an existing checkpoint works
        save_checkpoint(&dir, &m, Some(&optim), 3, rng, None).unwrap();
        let ck = load_checkpoint(&dir).unwrap();
        assert_eq!(ck.model.params(), m.params());
        assert_eq!(ck.optim.as_ref(), Some(&optim));
        assert_eq!((ck.step, ck.rng), (3, rng));

        let q = procedural_base(1, 8, 3);
        let refs = vec![procedural_base(2, 8, 3), procedural_base(3, 8, 3)];
        let a = m.forward(&q, &refs, false).unwrap().0;
        let b = ck.model.forward(&q, &refs, false).unwrap().0;
        assert_eq!(a.data(), b.data());
        let bytes = fs::metadata(dir.join("params.bin")).unwrap().len() as usize;
        assert_eq!(bytes, ModelConfig::tiny().parameter_count() * 4);
    }

    #[test]
    fn edited_shape_names_parameter() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("ck");
        save_checkpoint(&dir, &tiny(), None, 0, RngState { seed: 0, next_step: 0 }, None).unwrap();
        let path = dir.join("manifest.json");
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v["parameters"][2]["shape"] = serde_json::json!([2, 8]);
        fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        let err = load_checkpoint(&dir).unwrap_err().to_string();
        assert!(err.contains("encoder.pos_embed"), "{err}");
    }

    #[test]
    fn truncated_blob_and_version_and_config_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("ck");
        let rng = RngState { seed: 0, next_step: 0 };
        save_checkpoint(&dir, &tiny(), None, 0, rng, None).unwrap();
        let other = ModelConfig {
            n_ref: 3,
            ..ModelConfig::tiny()
        };
        assert!(matches!(load_model(&dir, Some(&other)), Err(Error::Checkpoint(_))));
        assert!(load_model(&dir, Some(&ModelConfig::tiny())).is_ok());

        let bin = dir.join("params.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint(&dir), Err(Error::Checkpoint(_))));

        save_checkpoint(&dir, &tiny(), None, 0, rng, None).unwrap();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).unwrap().replace(
            "\"format_version\": 1",
            "\"format_version\": 99",
        );
        fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&dir).unwrap_err().to_string().contains("version"));
    }
}
