//! Dataset trees: `<root>/<scene>/views/v###.png`, `queries/r###.png`,
//! `targets/r###.pfm` and `<root>/manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::distort::{DistortionKind, DistortionRanges, DistortionSpec};
use super::procedural::procedural_base;
use super::views::{synthesize_views, ViewJitter};
use super::{build_persistable_record, Scene};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::metrics::SsimParams;
use crate::parallel::par_map;
use crate::pfm::write_pfm_with_sidecar;
use crate::seed::{record_seed, rng, scene_seed};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub record_id: String,
    pub query_path: String,
    pub target_path: String,
    pub source_view_index: usize,
    /// Absent for ingested renders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub view_paths: Vec<String>,
    pub records: Vec<RecordEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub global_seed: u64,
    pub split: Split,
    pub scenes: Vec<SceneEntry>,
}

impl DatasetManifest {
    pub fn record_count(&self) -> usize {
        self.scenes.iter().map(|s| s.records.len()).sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// A manifest plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Validation(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { manifest, base_dir })
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let candidate = Path::new(p);
        if candidate.is_absolute() {
            candidate.to_path_buf()
        } else {
            self.base_dir.join(candidate)
        }
    }

    /// Every referenced file exists and every source index names a view.
    /// Returns the missing paths (empty when the tree is complete).
    pub fn missing_paths(&self) -> Vec<PathBuf> {
        let mut missing = Vec::new();
        for scene in &self.manifest.scenes {
            let record_paths = scene
                .records
                .iter()
                .flat_map(|r| [&r.query_path, &r.target_path]);
            for p in scene.view_paths.iter().chain(record_paths) {
                let full = self.resolve(p);
                if !full.is_file() {
                    missing.push(full);
                }
            }
        }
        missing
    }

    pub fn validate(&self, min_views: usize) -> Result<()> {
        let missing = self.missing_paths();
        if let Some(first) = missing.first() {
            return Err(Error::Validation(format!(
                "{} referenced file(s) missing, first: {}",
                missing.len(),
                first.display()
            )));
        }
        for scene in &self.manifest.scenes {
            if scene.view_paths.len() < min_views {
                return Err(Error::Validation(format!(
                    "scene {} has {} views, need at least {min_views}",
                    scene.scene_id,
                    scene.view_paths.len()
                )));
            }
            for r in &scene.records {
                if r.source_view_index >= scene.view_paths.len() {
                    return Err(Error::Validation(format!(
                        "record {} names source view {} but scene {} has {} views",
                        r.record_id,
                        r.source_view_index,
                        scene.scene_id,
                        scene.view_paths.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    pub global_seed: u64,
    /// Number of procedurally generated scenes.
    pub procedural_scenes: usize,
    /// Optional photographs used as scene bases (one scene each).
    pub base_images: Vec<PathBuf>,
    pub base_size: usize,
    pub channels: usize,
    pub n_views: usize,
    pub records_per_scene: usize,
    /// Kinds drawn uniformly per record.
    pub kinds: Vec<DistortionKind>,
    /// Record `i` of a scene uses `severities[i % len]`.
    pub severities: Vec<f64>,
    pub jitter: ViewJitter,
    pub ranges: DistortionRanges,
    pub ssim: SsimParams,
    pub split: Split,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            global_seed: 0,
            procedural_scenes: 2,
            base_images: Vec::new(),
            base_size: 256,
            channels: 3,
            n_views: 6,
            records_per_scene: 8,
            kinds: DistortionKind::ALL.to_vec(),
            severities: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            jitter: ViewJitter::default(),
            ranges: DistortionRanges::default(),
            ssim: SsimParams::default(),
            split: Split::Train,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.procedural_scenes == 0 && self.base_images.is_empty() {
            return Err(Error::Validation(
                "config lists no scenes (procedural_scenes = 0 and no base_images)".into(),
            ));
        }
        if self.records_per_scene == 0 || self.kinds.is_empty() || self.severities.is_empty() {
            return Err(Error::Validation(
                "config needs records_per_scene > 0 and non-empty kinds and severities".into(),
            ));
        }
        if let Some(s) = self.severities.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!("severity {s} outside [0, 1]")));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Validation(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        self.ssim.validate()
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn build_scene(config: &DatagenConfig, index: usize) -> Result<Scene> {
    let scene_id = format!("scene_{index:03}");
    let seed = scene_seed(config.global_seed, &scene_id);
    let base = if index < config.base_images.len() {
        let img = ImageGrid::load_png(&config.base_images[index])?;
        if img.channels() != config.channels {
            return Err(Error::Validation(format!(
                "{} has {} channels, config expects {}",
                config.base_images[index].display(),
                img.channels(),
                config.channels
            )));
        }
        img
    } else {
        procedural_base(seed, config.base_size, config.channels)
    };
    let mut scene = synthesize_views(&base, config.n_views, seed, &config.jitter, &scene_id)?;
    for v in &mut scene.views {
        *v = v.quantized_u8();
    }
    Ok(scene)
}

/// Writes a complete dataset tree under `out_dir` and returns its manifest.
/// Output is a pure function of the config; `workers` only changes speed.
pub fn generate_dataset(
    config: &DatagenConfig,
    out_dir: impl AsRef<Path>,
    workers: usize,
) -> Result<DatasetManifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    ensure_dir(out_dir)?;

    let n_scenes = config.base_images.len() + config.procedural_scenes;
    let scene_ids: Vec<usize> = (0..n_scenes).collect();
    let scenes: Vec<Scene> = par_map(&scene_ids, workers, |i| build_scene(config, *i))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        let dir = out_dir.join(&scene.scene_id);
        for sub in ["views", "queries", "targets"] {
            ensure_dir(&dir.join(sub))?;
        }
        let mut view_paths = Vec::with_capacity(scene.views.len());
        for (i, v) in scene.views.iter().enumerate() {
            let rel = format!("{}/views/v{i:03}.png", scene.scene_id);
            v.save_png(out_dir.join(&rel))?;
            view_paths.push(rel);
        }
        entries.push(SceneEntry {
            scene_id: scene.scene_id.clone(),
            view_paths,
            records: Vec::new(),
        });
    }

    let jobs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..config.records_per_scene).map(move |r| (s, r)))
        .collect();
    let records: Vec<RecordEntry> = par_map(&jobs, workers, |&(s, r)| {
        write_record(config, &scenes[s], r, out_dir)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    for ((s, _), rec) in jobs.iter().zip(records) {
        entries[*s].records.push(rec);
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        global_seed: config.global_seed,
        split: config.split,
        scenes: entries,
    };
    manifest.write(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn write_record(
    config: &DatagenConfig,
    scene: &Scene,
    index: usize,
    out_dir: &Path,
) -> Result<RecordEntry> {
    let mut r = rng(record_seed(config.global_seed, &scene.scene_id, index as u64));
    let source = r.random_range(0..scene.views.len());
    let kind = config.kinds[r.random_range(0..config.kinds.len())];
    let severity = config.severities[index % config.severities.len()];
    let spec = DistortionSpec::new(kind, severity, r.next_u64());
    let record = build_persistable_record(scene, source, &spec, &config.ssim, &config.ranges)?;

    let query_rel = format!("{}/queries/r{index:03}.png", scene.scene_id);
    let target_rel = format!("{}/targets/r{index:03}.pfm", scene.scene_id);
    record.query.save_png(out_dir.join(&query_rel))?;
    write_pfm_with_sidecar(
        &record.target,
        out_dir.join(&target_rel),
        &query_rel,
        "ssim_target",
    )?;
    Ok(RecordEntry {
        record_id: format!("{}/r{index:03}", scene.scene_id),
        query_path: query_rel,
        target_path: target_rel,
        source_view_index: source,
        distortion: Some(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{clamp_unit, mean_score, ssim_map};
    use crate::pfm::read_pfm;

    fn small_config() -> DatagenConfig {
        DatagenConfig {
            global_seed: 42,
            procedural_scenes: 2,
            records_per_scene: 4,
            n_views: 4,
            jitter: ViewJitter {
                view_size: Some(64),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn generation_is_deterministic_across_runs_and_workers() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let ma = generate_dataset(&cfg, a.path(), 1).unwrap();
        let mb = generate_dataset(&cfg, b.path(), 3).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.record_count(), 8);
        assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    }

    #[test]
    fn generated_tree_validates_and_targets_recompute() {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(&small_config(), dir.path(), 1).unwrap();
        let loaded = LoadedManifest::load(dir.path().join("manifest.json")).unwrap();
        assert!(loaded.missing_paths().is_empty());
        loaded.validate(4).unwrap();
        let p = SsimParams::default();
        for scene in &loaded.manifest.scenes {
            for rec in &scene.records {
                let q = ImageGrid::load_png(loaded.resolve(&rec.query_path)).unwrap();
                let v = ImageGrid::load_png(loaded.resolve(&scene.view_paths[rec.source_view_index]))
                    .unwrap();
                let stored = read_pfm(loaded.resolve(&rec.target_path)).unwrap();
                let again = clamp_unit(&ssim_map(&q, &v, &p).unwrap());
                for (x, y) in stored.data().iter().zip(again.data()) {
                    assert!((x - y).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn severity_grid_yields_graded_targets() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatagenConfig {
            procedural_scenes: 1,
            records_per_scene: 9,
            ..small_config()
        };
        let m = generate_dataset(&cfg, dir.path(), 1).unwrap();
        let means: Vec<f64> = m.scenes[0]
            .records
            .iter()
            .map(|r| mean_score(&read_pfm(dir.path().join(&r.target_path)).unwrap(), None).unwrap())
            .collect();
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo >= 0.2, "{means:?}");
    }

    #[test]
    fn empty_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatagenConfig {
            procedural_scenes: 0,
            ..Default::default()
        };
        assert!(matches!(
            generate_dataset(&cfg, dir.path(), 1),
            Err(Error::Validation(_))
        ));
        let cfg = DatagenConfig {
            severities: vec![],
            ..Default::default()
        };
        assert!(generate_dataset(&cfg, dir.path(), 1).is_err());
    }

    #[test]
    fn unwritable_output_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        assert!(matches!(
            generate_dataset(&small_config(), file.join("sub"), 1),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn validation_flags_bad_source_index() {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(&small_config(), dir.path(), 1).unwrap();
        let mut loaded = LoadedManifest::load(dir.path().join("manifest.json")).unwrap();
        loaded.manifest.scenes[0].records[0].source_view_index = 99;
        assert!(loaded.validate(2).is_err());
        assert!(loaded.validate(99).is_err());
    }
}
