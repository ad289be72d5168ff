//! Self-supervised training data: multi-view scenes, distortions, SSIM
//! targets and on-disk dataset trees.

mod dataset;
mod distort;
mod ingest;
pub mod procedural;
mod views;

pub use dataset::{
    generate_dataset, DatagenConfig, DatasetManifest, LoadedManifest, RecordEntry, SceneEntry,
    Split, MANIFEST_VERSION,
};
pub use distort::{
    apply_distortion, apply_distortion_with, gaussian_blur, DistortionKind, DistortionRanges,
    DistortionSpec,
};
pub use ingest::{ingest_external_renders, IngestReport, SkippedFile};
pub use views::{
    apply_homography, homography_from_points, synthesize_views, ViewJitter, ViewMeta,
    MIN_BASE_SIDE,
};

use crate::error::{Error, Result};
use crate::image::{ImageGrid, ScoreMap};
use crate::metrics::{clamp_unit, ssim_map, SsimParams};

/// A captured view set of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub views: Vec<ImageGrid>,
    pub view_metadata: Vec<ViewMeta>,
}

impl Scene {
    /// Checks the view-count and channel invariants for a reference set of
    /// `n_ref` images.
    pub fn validate(&self, n_ref: usize) -> Result<()> {
        if self.views.len() < n_ref + 1 {
            return Err(Error::Validation(format!(
                "scene {} has {} views; {} references need at least {}",
                self.scene_id,
                self.views.len(),
                n_ref,
                n_ref + 1
            )));
        }
        let c = self.views[0].channels();
        if self.views.iter().any(|v| v.channels() != c) {
            return Err(Error::Validation(format!(
                "scene {} mixes channel counts",
                self.scene_id
            )));
        }
        Ok(())
    }
}

/// One supervised example: a distorted view and its clamped SSIM target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRecord {
    pub scene_id: String,
    pub query: ImageGrid,
    pub target: ScoreMap,
    pub source_view_index: usize,
    pub distortion: DistortionSpec,
}

/// The query is the distorted source view; the target is the clamped SSIM
/// map of that query against the undistorted view.
pub fn build_training_record(
    scene: &Scene,
    source_view_index: usize,
    spec: &DistortionSpec,
    ssim_params: &SsimParams,
) -> Result<TrainingRecord> {
    build_record(scene, source_view_index, spec, ssim_params, &DistortionRanges::default(), false)
}

/// Like [`build_training_record`] but the query is rounded to 8-bit levels
/// before the target is computed, so the record survives a PNG round trip.
pub fn build_persistable_record(
    scene: &Scene,
    source_view_index: usize,
    spec: &DistortionSpec,
    ssim_params: &SsimParams,
    ranges: &DistortionRanges,
) -> Result<TrainingRecord> {
    build_record(scene, source_view_index, spec, ssim_params, ranges, true)
}

fn build_record(
    scene: &Scene,
    idx: usize,
    spec: &DistortionSpec,
    ssim_params: &SsimParams,
    ranges: &DistortionRanges,
    quantize: bool,
) -> Result<TrainingRecord> {
    let source = scene.views.get(idx).ok_or_else(|| {
        Error::Validation(format!(
            "source view index {idx} out of range for scene {} with {} views",
            scene.scene_id,
            scene.views.len()
        ))
    })?;
    let mut query = apply_distortion_with(source, spec, ranges)?;
    if quantize {
        query = query.quantized_u8();
    }
    let target = clamp_unit(&ssim_map(&query, source, ssim_params)?);
    Ok(TrainingRecord {
        scene_id: scene.scene_id.clone(),
        query,
        target,
        source_view_index: idx,
        distortion: *spec,
    })
}
