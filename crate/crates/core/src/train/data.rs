//! In-memory training set and batch sampling.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{LoadedManifest, Scene, TrainingRecord};
use crate::error::{Error, Result};
use crate::image::{CropRect, ImageGrid, ScoreMap};
use crate::parallel::par_map;
use crate::pfm::read_pfm;
use crate::seed::{rng, step_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedRecord {
    pub record_id: String,
    pub query: ImageGrid,
    pub target: ScoreMap,
    pub source_view_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedScene {
    pub scene_id: String,
    pub views: Vec<ImageGrid>,
    pub records: Vec<LoadedRecord>,
}

impl LoadedScene {
    /// Wraps a synthesized scene and records built from it.
    pub fn from_records(scene: &Scene, records: &[TrainingRecord]) -> Self {
        Self {
            scene_id: scene.scene_id.clone(),
            views: scene.views.clone(),
            records: records
                .iter()
                .enumerate()
                .map(|(i, r)| LoadedRecord {
                    record_id: format!("{}/r{i:03}", scene.scene_id),
                    query: r.query.clone(),
                    target: r.target.clone(),
                    source_view_index: r.source_view_index,
                })
                .collect(),
        }
    }
}

/// Every scene and record of a dataset, decoded.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub scenes: Vec<LoadedScene>,
    /// (scene, record) pairs usable at the configured crop size.
    index: Vec<(usize, usize)>,
}

impl TrainData {
    /// Checks view counts and builds the sampling index. Records whose
    /// query, or whose scene's views, are smaller than `crop` are skipped
    /// with a warning.
    pub fn new(scenes: Vec<LoadedScene>, n_ref: usize, crop: usize) -> Result<Self> {
        let mut index = Vec::new();
        for (si, s) in scenes.iter().enumerate() {
            if s.views.len() < n_ref + 1 {
                return Err(Error::Validation(format!(
                    "scene {} has {} views; {} references plus the source view need {}",
                    s.scene_id,
                    s.views.len(),
                    n_ref,
                    n_ref + 1
                )));
            }
            let small_view = s
                .views
                .iter()
                .position(|v| v.height() < crop || v.width() < crop);
            for (ri, r) in s.records.iter().enumerate() {
                if r.source_view_index >= s.views.len() {
                    return Err(Error::Validation(format!(
                        "record {} names source view {} of {}",
                        r.record_id,
                        r.source_view_index,
                        s.views.len()
                    )));
                }
                if (r.query.height(), r.query.width()) != (r.target.height(), r.target.width()) {
                    return Err(Error::Shape(format!(
                        "record {}: query and target sizes differ",
                        r.record_id
                    )));
                }
                if r.query.height() < crop || r.query.width() < crop {
                    log::warn!("skipping record {}: smaller than crop {crop}", r.record_id);
                } else if let Some(v) = small_view {
                    log::warn!(
                        "skipping record {}: view {v} of scene {} is smaller than crop {crop}",
                        r.record_id,
                        s.scene_id
                    );
                } else {
                    index.push((si, ri));
                }
            }
        }
        if index.is_empty() {
            return Err(Error::Validation("no usable training records".into()));
        }
        Ok(Self { scenes, index })
    }

    /// Decodes every view, query and target a manifest references.
    pub fn load(manifest: &LoadedManifest, n_ref: usize, crop: usize, workers: usize) -> Result<Self> {
        Self::new(load_scenes(manifest, n_ref + 1, workers)?, n_ref, crop)
    }

    pub fn usable_records(&self) -> usize {
        self.index.len()
    }
}

/// Validates a manifest (every file present, at least `min_views` views per
/// scene) and decodes all of its images and targets.
pub fn load_scenes(
    manifest: &LoadedManifest,
    min_views: usize,
    workers: usize,
) -> Result<Vec<LoadedScene>> {
    manifest.validate(min_views)?;
    par_map(&manifest.manifest.scenes, workers, |s| -> Result<LoadedScene> {
        let views = s
            .view_paths
            .iter()
            .map(|p| ImageGrid::load_png(manifest.resolve(p)))
            .collect::<Result<Vec<_>>>()?;
        let records = s
            .records
            .iter()
            .map(|r| {
                Ok(LoadedRecord {
                    record_id: r.record_id.clone(),
                    query: ImageGrid::load_png(manifest.resolve(&r.query_path))?,
                    target: read_pfm(manifest.resolve(&r.target_path))?,
                    source_view_index: r.source_view_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedScene {
            scene_id: s.scene_id.clone(),
            views,
            records,
        })
    })
    .into_iter()
    .collect()
}

/// Where a batch entry came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub record_id: String,
    pub scene_index: usize,
    pub record_index: usize,
    pub source_view_index: usize,
    pub query_crop: CropRect,
    pub ref_views: Vec<usize>,
    pub ref_crops: Vec<CropRect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub queries: Vec<ImageGrid>,
    pub targets: Vec<ScoreMap>,
    pub refs: Vec<Vec<ImageGrid>>,
    pub provenance: Vec<Provenance>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn record_ids(&self) -> String {
        self.provenance
            .iter()
            .map(|p| p.record_id.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn random_crop(r: &mut impl Rng, h: usize, w: usize, crop: usize) -> CropRect {
    CropRect::new(
        r.random_range(0..=h - crop),
        r.random_range(0..=w - crop),
        crop,
        crop,
    )
}

/// Draws `batch_size` records uniformly. The query and its target share one
/// random crop; each of the `n_ref` references is a distinct view other
/// than the source, drawn without replacement, with its own crop offset.
/// Fully determined by `(seed, step)`.
pub fn sample_batch(
    data: &TrainData,
    batch_size: usize,
    n_ref: usize,
    crop: usize,
    seed: u64,
    step: u64,
) -> Result<Batch> {
    let mut r = rng(step_seed(seed, step));
    let mut batch = Batch {
        queries: Vec::with_capacity(batch_size),
        targets: Vec::with_capacity(batch_size),
        refs: Vec::with_capacity(batch_size),
        provenance: Vec::with_capacity(batch_size),
    };
    for _ in 0..batch_size {
        let (si, ri) = data.index[r.random_range(0..data.index.len())];
        let scene = &data.scenes[si];
        let rec = &scene.records[ri];
        let qc = random_crop(&mut r, rec.query.height(), rec.query.width(), crop);
        let candidates: Vec<usize> = (0..scene.views.len())
            .filter(|&v| v != rec.source_view_index)
            .collect();
        let picks = sample(&mut r, candidates.len(), n_ref);
        let mut ref_views = Vec::with_capacity(n_ref);
        let mut ref_crops = Vec::with_capacity(n_ref);
        let mut refs = Vec::with_capacity(n_ref);
        for k in picks.iter() {
            let v = candidates[k];
            let view = &scene.views[v];
            let rc = random_crop(&mut r, view.height(), view.width(), crop);
            refs.push(view.crop(rc)?);
            ref_views.push(v);
            ref_crops.push(rc);
        }
        debug_assert!(!ref_views.contains(&rec.source_view_index));
        batch.queries.push(rec.query.crop(qc)?);
        batch.targets.push(rec.target.crop(qc)?);
        batch.refs.push(refs);
        batch.provenance.push(Provenance {
            record_id: rec.record_id.clone(),
            scene_index: si,
            record_index: ri,
            source_view_index: rec.source_view_index,
            query_crop: qc,
            ref_views,
            ref_crops,
        });
    }
    Ok(batch)
}
