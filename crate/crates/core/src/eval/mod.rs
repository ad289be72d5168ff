//! Scoring, per-scene correlation tables, rankings, model comparison,
//! reference ablation and attention export.

mod report;

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{colormap, render_overlay, render_report, ReportFiles};

use crate::error::{Error, Result};
use crate::image::{center_crop_rect, CropRect, ImageGrid, ScoreMap};
use crate::metrics::{mean_score, pearson, psnr, spearman};
use crate::model::{AttentionRecord, CrossRefModel};
use crate::parallel::par_map;
use crate::pfm::write_pfm;
use crate::seed::derive_seed;
use crate::train::LoadedScene;

/// One query prepared for scoring.
#[derive(Clone, Copy, Debug)]
pub struct EvalItem<'a> {
    pub record_id: &'a str,
    pub query: &'a ImageGrid,
    pub refs: &'a [ImageGrid],
    /// Clamped SSIM against the ground truth, cropped like `query`.
    pub target: &'a ScoreMap,
}

/// Anything that produces a score map for a query and its references.
pub trait ScoreModel: Sync {
    fn n_ref(&self) -> usize;
    /// Inputs are center-cropped to a multiple of the first value and to at
    /// most the second value per side.
    fn crop_policy(&self) -> (usize, Option<usize>);
    fn predict(&self, item: &EvalItem<'_>) -> Result<ScoreMap>;
}

impl ScoreModel for CrossRefModel<f32> {
    fn n_ref(&self) -> usize {
        self.config().n_ref
    }

    fn crop_policy(&self) -> (usize, Option<usize>) {
        (self.config().patch_size, Some(self.config().max_side()))
    }

    fn predict(&self, item: &EvalItem<'_>) -> Result<ScoreMap> {
        Ok(self.forward(item.query, item.refs, false)?.0)
    }
}

pub const REF_POLICY: &str =
    "extra references are trimmed to the first n_ref; fewer than n_ref is an error";

/// Applies the reference-count policy.
pub fn select_references<'a>(refs: &'a [ImageGrid], n_ref: usize) -> Result<&'a [ImageGrid]> {
    if refs.len() < n_ref {
        return Err(Error::Validation(format!(
            "{} reference images given, the model needs {n_ref} ({REF_POLICY})",
            refs.len()
        )));
    }
    if refs.len() > n_ref {
        log::info!("using the first {n_ref} of {} references", refs.len());
    }
    Ok(&refs[..n_ref])
}

fn crop_to_policy(img: &ImageGrid, multiple: usize, max_side: Option<usize>) -> Result<(ImageGrid, CropRect)> {
    let rect = center_crop_rect(img.height(), img.width(), multiple, max_side)?;
    Ok((img.crop(rect)?, rect))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOutput {
    pub map: ScoreMap,
    pub mean: f64,
    /// Region of the query that was scored.
    pub crop: CropRect,
}

/// Center-crops every input to what the model accepts, runs it and returns
/// the map with its mean.
pub fn score_image(model: &CrossRefModel<f32>, query: &ImageGrid, refs: &[ImageGrid]) -> Result<ScoreOutput> {
    let refs = select_references(refs, model.config().n_ref)?;
    let (p, max) = model.crop_policy();
    let (q, crop) = crop_to_policy(query, p, max)?;
    if (crop.height, crop.width) != (query.height(), query.width()) {
        log::info!(
            "query {}x{} center-cropped to {}x{} at ({}, {})",
            query.height(),
            query.width(),
            crop.height,
            crop.width,
            crop.top,
            crop.left
        );
    }
    let r = refs
        .iter()
        .map(|img| crop_to_policy(img, p, max).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;
    let (map, _) = model.forward(&q, &r, false)?;
    let mean = mean_score(&map, None)?;
    Ok(ScoreOutput { map, mean, crop })
}

/// Serialises non-finite floats as the strings "NaN", "inf" and "-inf".
pub mod json_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad float {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    #[serde(with = "json_float")]
    pub ssim: f64,
    #[serde(with = "json_float")]
    pub cross: f64,
    #[serde(with = "json_float")]
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub scene_id: String,
    #[serde(with = "json_float")]
    pub mean_ssim: f64,
    #[serde(with = "json_float")]
    pub mean_cross: f64,
    #[serde(with = "json_float")]
    pub mean_psnr: f64,
    /// Pearson between per-image cross and SSIM means; NaN when undefined.
    #[serde(with = "json_float")]
    pub pearson: f64,
    pub per_image: Vec<ImageRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: Vec<SceneResult>,
    /// Pearson over the per-image rows of every scene with a defined
    /// per-scene correlation.
    #[serde(with = "json_float")]
    pub pearson_cross_vs_ssim: f64,
    /// Spearman between the scene rankings by mean cross and mean SSIM.
    #[serde(with = "json_float")]
    pub spearman_rank_corr: f64,
    pub excluded_scenes: Vec<String>,
    pub config: serde_json::Value,
    pub checkpoint_id: String,
}

/// Report plus the predicted maps, keyed by record id.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: EvalReport,
    pub maps: Vec<(String, ScoreMap)>,
}

/// The first `n_ref` views other than the source, in view order.
pub fn eval_reference_indices(n_views: usize, source: usize, n_ref: usize) -> Vec<usize> {
    (0..n_views).filter(|&v| v != source).take(n_ref).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn correlation_or_nan(r: Result<f64>, what: &str) -> f64 {
    match r {
        Ok(v) => v,
        Err(e) => {
            log::warn!("{what}: {e}");
            f64::NAN
        }
    }
}

/// Content hash of a model's parameters, stable across file locations.
pub fn checkpoint_id(model: &CrossRefModel<f32>) -> String {
    let mut bytes = Vec::with_capacity(model.params().scalar_count() * 4);
    for v in model.params().values() {
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    format!("{:016x}", derive_seed(0, &[&bytes]))
}

/// Scores every record of every scene against its ground truth.
///
/// Each query (with its target) and each reference is center-cropped to
/// the model's input policy, so SSIM, PSNR and the prediction cover the
/// same pixels. Scenes whose per-image correlation is undefined are kept
/// as NaN rows and excluded from the aggregates.
pub fn evaluate_scenes(
    model: &dyn ScoreModel,
    scenes: &[LoadedScene],
    config: serde_json::Value,
    checkpoint_id: &str,
    workers: usize,
) -> Result<Evaluation> {
    let n_ref = model.n_ref();
    let (multiple, max_side) = model.crop_policy();
    let per_scene = par_map(scenes, workers, |scene| -> Result<(SceneResult, Vec<(String, ScoreMap)>)> {
        if scene.views.len() < n_ref + 1 {
            return Err(Error::Validation(format!(
                "scene {} has {} views, evaluation needs {}",
                scene.scene_id,
                scene.views.len(),
                n_ref + 1
            )));
        }
        let mut rows = Vec::with_capacity(scene.records.len());
        let mut maps = Vec::with_capacity(scene.records.len());
        for rec in &scene.records {
            let (query, rect) = crop_to_policy(&rec.query, multiple, max_side)?;
            let target = rec.target.crop(rect)?;
            let truth = scene.views[rec.source_view_index].crop(rect)?;
            let refs = eval_reference_indices(scene.views.len(), rec.source_view_index, n_ref)
                .into_iter()
                .map(|v| crop_to_policy(&scene.views[v], multiple, max_side).map(|x| x.0))
                .collect::<Result<Vec<_>>>()?;
            let item = EvalItem {
                record_id: &rec.record_id,
                query: &query,
                refs: &refs,
                target: &target,
            };
            let map = model.predict(&item)?;
            rows.push(ImageRow {
                image_id: rec.record_id.clone(),
                ssim: mean_score(&target, None)?,
                cross: mean_score(&map, None)?,
                psnr: psnr(&query, &truth)?,
            });
            maps.push((rec.record_id.clone(), map));
        }
        let col = |f: fn(&ImageRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let (ssim, cross, ps) = (col(|r| r.ssim), col(|r| r.cross), col(|r| r.psnr));
        let pearson = correlation_or_nan(pearson(&cross, &ssim), &format!("scene {}", scene.scene_id));
        Ok((
            SceneResult {
                scene_id: scene.scene_id.clone(),
                mean_ssim: mean(&ssim),
                mean_cross: mean(&cross),
                mean_psnr: mean(&ps),
                pearson,
                per_image: rows,
            },
            maps,
        ))
    });
    let mut results = Vec::with_capacity(scenes.len());
    let mut maps = Vec::new();
    for r in per_scene {
        let (s, m) = r?;
        results.push(s);
        maps.extend(m);
    }
    Ok(Evaluation {
        report: assemble_report(results, config, checkpoint_id),
        maps,
    })
}

/// Aggregates scene rows into a report, applying the NaN-scene policy.
pub fn assemble_report(
    scenes: Vec<SceneResult>,
    config: serde_json::Value,
    checkpoint_id: &str,
) -> EvalReport {
    let mut excluded = Vec::new();
    let (mut xs, mut ys, mut sx, mut sy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in &scenes {
        if !s.pearson.is_finite() {
            log::warn!("scene {} has an undefined correlation; excluded from aggregates", s.scene_id);
            excluded.push(s.scene_id.clone());
            continue;
        }
        xs.extend(s.per_image.iter().map(|r| r.cross));
        ys.extend(s.per_image.iter().map(|r| r.ssim));
        sx.push(s.mean_cross);
        sy.push(s.mean_ssim);
    }
    let pooled = if xs.is_empty() {
        log::warn!("no scene with a defined correlation");
        f64::NAN
    } else {
        correlation_or_nan(pearson(&xs, &ys), "pooled correlation")
    };
    let rank = if sx.len() < 2 {
        f64::NAN
    } else {
        correlation_or_nan(spearman(&sx, &sy), "scene rank correlation")
    };
    EvalReport {
        scenes,
        pearson_cross_vs_ssim: pooled,
        spearman_rank_corr: rank,
        excluded_scenes: excluded,
        config,
        checkpoint_id: checkpoint_id.to_string(),
    }
}

/// 0-based dense ranks, highest score first.
pub fn dense_ranks(scores: &[f64]) -> Vec<usize> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    distinct.dedup();
    scores
        .iter()
        .map(|s| distinct.iter().position(|d| d == s).expect("present"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub scene_id: String,
    pub ssim: f64,
    pub cross: f64,
    pub ssim_rank: usize,
    pub cross_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
    /// Spearman between the two rankings, ties averaged.
    pub spearman: f64,
}

/// Ranks scenes by two score columns. Needs at least three scenes.
pub fn rank_scores(ids: &[String], ssim: &[f64], cross: &[f64]) -> Result<RankTable> {
    if ids.len() != ssim.len() || ids.len() != cross.len() {
        return Err(Error::Shape("rank columns differ in length".into()));
    }
    if ids.len() < 3 {
        return Err(Error::Validation(format!(
            "ranking needs at least 3 scenes with defined scores, got {}",
            ids.len()
        )));
    }
    let (rs, rc) = (dense_ranks(ssim), dense_ranks(cross));
    let rows = (0..ids.len())
        .map(|i| RankRow {
            scene_id: ids[i].clone(),
            ssim: ssim[i],
            cross: cross[i],
            ssim_rank: rs[i],
            cross_rank: rc[i],
        })
        .collect();
    Ok(RankTable {
        rows,
        spearman: spearman(ssim, cross)?,
    })
}

/// Ranks the scenes of a report that have finite means.
pub fn rank_scenes(report: &EvalReport) -> Result<RankTable> {
    let usable: Vec<&SceneResult> = report
        .scenes
        .iter()
        .filter(|s| s.mean_ssim.is_finite() && s.mean_cross.is_finite())
        .collect();
    let ids: Vec<String> = usable.iter().map(|s| s.scene_id.clone()).collect();
    let ssim: Vec<f64> = usable.iter().map(|s| s.mean_ssim).collect();
    let cross: Vec<f64> = usable.iter().map(|s| s.mean_cross).collect();
    rank_scores(&ids, &ssim, &cross)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub higher_is_better: bool,
    pub winner: Winner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub model_a: String,
    pub model_b: String,
    pub rows: Vec<MetricRow>,
}

impl ComparisonTable {
    /// Builds the table from `(metric, a, b, higher_is_better)` tuples.
    pub fn from_columns(model_a: &str, model_b: &str, metrics: &[(&str, f64, f64, bool)]) -> Self {
        let rows = metrics
            .iter()
            .map(|&(metric, a, b, higher)| {
                let winner = match a.partial_cmp(&b) {
                    Some(Ordering::Equal) | None => Winner::Tie,
                    Some(Ordering::Greater) if higher => Winner::A,
                    Some(Ordering::Less) if !higher => Winner::A,
                    _ => Winner::B,
                };
                MetricRow {
                    metric: metric.to_string(),
                    a,
                    b,
                    higher_is_better: higher,
                    winner,
                }
            })
            .collect();
        Self {
            model_a: model_a.to_string(),
            model_b: model_b.to_string(),
            rows,
        }
    }

    /// The common winner when every metric agrees.
    pub fn overall(&self) -> Option<Winner> {
        let first = self.rows.first()?.winner;
        self.rows.iter().all(|r| r.winner == first).then_some(first)
    }
}

/// Mean absolute error between each prediction of an evaluation and its
/// target, cropped the same way.
pub fn prediction_mae(eval: &Evaluation, scenes: &[LoadedScene], model: &dyn ScoreModel) -> Result<f64> {
    let (multiple, max_side) = model.crop_policy();
    let mut targets = std::collections::HashMap::new();
    for s in scenes {
        for r in &s.records {
            targets.insert(r.record_id.as_str(), r);
        }
    }
    let mut sum = 0.0;
    for (id, map) in &eval.maps {
        let rec = targets[id.as_str()];
        let rect = center_crop_rect(rec.query.height(), rec.query.width(), multiple, max_side)?;
        sum += map.l1_distance(&rec.target.crop(rect)?)?;
    }
    Ok(sum / eval.maps.len().max(1) as f64)
}

/// Evaluates two models on the same scenes: mean predicted score, mean
/// absolute error against the SSIM targets and pooled correlation.
pub fn compare_models(
    (name_a, a): (&str, &dyn ScoreModel),
    (name_b, b): (&str, &dyn ScoreModel),
    scenes: &[LoadedScene],
    workers: usize,
) -> Result<ComparisonTable> {
    let ea = evaluate_scenes(a, scenes, serde_json::Value::Null, name_a, workers)?;
    let eb = evaluate_scenes(b, scenes, serde_json::Value::Null, name_b, workers)?;
    let mean_cross = |e: &Evaluation| {
        let v: Vec<f64> = e.report.scenes.iter().flat_map(|s| s.per_image.iter().map(|r| r.cross)).collect();
        mean(&v)
    };
    Ok(ComparisonTable::from_columns(
        name_a,
        name_b,
        &[
            ("mean_cross", mean_cross(&ea), mean_cross(&eb), true),
            ("mae_vs_ssim", prediction_mae(&ea, scenes, a)?, prediction_mae(&eb, scenes, b)?, false),
            (
                "pearson_cross_vs_ssim",
                ea.report.pearson_cross_vs_ssim,
                eb.report.pearson_cross_vs_ssim,
                true,
            ),
        ],
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ablation {
    pub map_on: ScoreMap,
    pub map_off: ScoreMap,
    pub mean_on: f64,
    pub mean_off: f64,
    /// Mean absolute difference between the two maps.
    pub l1_delta: f64,
}

/// Scores a query with its references and with all-zero images of the same
/// sizes in their place.
pub fn ablate_references(model: &CrossRefModel<f32>, query: &ImageGrid, refs: &[ImageGrid]) -> Result<Ablation> {
    let on = score_image(model, query, refs)?;
    let zeros: Vec<ImageGrid> = refs.iter().map(ImageGrid::zeros_like).collect();
    let off = score_image(model, query, &zeros)?;
    Ok(Ablation {
        l1_delta: on.map.l1_distance(&off.map)?,
        mean_on: on.mean,
        mean_off: off.mean,
        map_on: on.map,
        map_off: off.map,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionIndexEntry {
    pub ref_index: usize,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionIndex {
    pub record_id: String,
    pub patch: (usize, usize),
    pub layer: usize,
    /// `None` when heads were averaged.
    pub head: Option<usize>,
    pub entries: Vec<AttentionIndexEntry>,
}

/// Splits one query token's attention row into per-reference heatmaps.
pub fn attention_heatmaps(
    record: &AttentionRecord,
    patch: (usize, usize),
    layer: Option<usize>,
    head: Option<usize>,
) -> Result<Vec<ScoreMap>> {
    let (rows, cols) = record.query_grid;
    if patch.0 >= rows || patch.1 >= cols {
        return Err(Error::Validation(format!(
            "patch ({}, {}) is outside the {rows}x{cols} query grid",
            patch.0, patch.1
        )));
    }
    let attn = record.reduce(layer, head)?;
    let row = attn.row(patch.0 * cols + patch.1);
    let mut out = Vec::with_capacity(record.ref_grids.len());
    for (&(r, c), off) in record.ref_grids.iter().zip(record.ref_offsets()) {
        let data = row
            .slice(ndarray::s![off..off + r * c])
            .iter()
            .map(|v| *v as f32)
            .collect();
        out.push(ScoreMap::new(r, c, data)?);
    }
    Ok(out)
}

fn safe_component(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `out_dir/attention/<record>/<ref_idx>.pfm` for the chosen query
/// patch plus an `index.json`. Returns the index.
#[allow(clippy::too_many_arguments)]
pub fn export_attention(
    model: &CrossRefModel<f32>,
    record_id: &str,
    query: &ImageGrid,
    refs: &[ImageGrid],
    patch: (usize, usize),
    layer: Option<usize>,
    head: Option<usize>,
    out_dir: impl AsRef<Path>,
) -> Result<AttentionIndex> {
    let refs = select_references(refs, model.config().n_ref)?;
    let (p, max) = model.crop_policy();
    let (q, _) = crop_to_policy(query, p, max)?;
    let r = refs
        .iter()
        .map(|img| crop_to_policy(img, p, max).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;
    let (_, record) = model.forward(&q, &r, true)?;
    let record = record.expect("capture requested");
    let maps = attention_heatmaps(&record, patch, layer, head)?;
    let dir: PathBuf = out_dir.as_ref().join("attention").join(safe_component(record_id));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut entries = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let file = format!("{i}.pfm");
        write_pfm(m, dir.join(&file))?;
        entries.push(AttentionIndexEntry {
            ref_index: i,
            file,
            rows: m.height(),
            cols: m.width(),
            mass: m.data().iter().map(|v| *v as f64).sum(),
        });
    }
    let index = AttentionIndex {
        record_id: record_id.to_string(),
        patch,
        layer: layer.unwrap_or(record.layers.len() - 1),
        head,
        entries,
    };
    let path = dir.join("index.json");
    let mut json = serde_json::to_string_pretty(&index).expect("index serialises");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

#[cfg(test)]
mod tests;
