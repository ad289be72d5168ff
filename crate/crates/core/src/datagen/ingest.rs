//! Ingestion of externally rendered images paired with ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, RecordEntry, SceneEntry, Split, MANIFEST_VERSION};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::metrics::{clamp_unit, ssim_map, SsimParams};
use crate::pfm::write_pfm_with_sidecar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub manifest: DatasetManifest,
    pub skipped: Vec<SkippedFile>,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn absolute(p: &Path) -> Result<String> {
    let abs = fs::canonicalize(p).map_err(|e| Error::io(p, e))?;
    Ok(abs.to_string_lossy().into_owned())
}

/// Pairs every PNG in `render_dir` with the same-named file in `gt_dir`,
/// writes clamped SSIM targets under `out_dir/targets/` and a manifest at
/// `out_dir/manifest.json`. The scene's views are the matched ground truths
/// followed by every PNG in `refs_dir`. Problem pairs are skipped and
/// reported; the batch continues.
pub fn ingest_external_renders(
    render_dir: impl AsRef<Path>,
    gt_dir: impl AsRef<Path>,
    refs_dir: impl AsRef<Path>,
    ssim_params: &SsimParams,
    out_dir: impl AsRef<Path>,
) -> Result<IngestReport> {
    let (render_dir, gt_dir, refs_dir, out_dir) = (
        render_dir.as_ref(),
        gt_dir.as_ref(),
        refs_dir.as_ref(),
        out_dir.as_ref(),
    );
    ssim_params.validate()?;
    let targets_dir = out_dir.join("targets");
    fs::create_dir_all(&targets_dir).map_err(|e| Error::io(&targets_dir, e))?;

    let mut skipped = Vec::new();
    let mut accepted: Vec<(PathBuf, PathBuf, String)> = Vec::new();
    for render in png_files(render_dir)? {
        let name = render
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let gt = gt_dir.join(&name);
        let skip = |reason: String| {
            log::warn!("ingest: skipping {name}: {reason}");
            SkippedFile {
                file: name.clone(),
                reason,
            }
        };
        if !gt.is_file() {
            skipped.push(skip("no ground-truth image with the same name".into()));
            continue;
        }
        let (q, t) = (ImageGrid::load_png(&render)?, ImageGrid::load_png(&gt)?);
        if q.dims() != t.dims() {
            skipped.push(skip(format!(
                "dimension mismatch: render {:?} vs ground truth {:?}",
                q.dims(),
                t.dims()
            )));
            continue;
        }
        let stem = render
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let target = clamp_unit(&ssim_map(&q, &t, ssim_params)?);
        let target_rel = format!("targets/{stem}.pfm");
        write_pfm_with_sidecar(
            &target,
            out_dir.join(&target_rel),
            &absolute(&render)?,
            "ssim_target",
        )?;
        accepted.push((render, gt, target_rel));
    }

    let mut view_paths = Vec::new();
    let mut records = Vec::new();
    for (i, (render, gt, target_rel)) in accepted.iter().enumerate() {
        view_paths.push(absolute(gt)?);
        let stem = render
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        records.push(RecordEntry {
            record_id: format!("ingested/{stem}"),
            query_path: absolute(render)?,
            target_path: target_rel.clone(),
            source_view_index: i,
            distortion: None,
        });
    }
    for r in png_files(refs_dir)? {
        view_paths.push(absolute(&r)?);
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        global_seed: 0,
        split: Split::Eval,
        scenes: vec![SceneEntry {
            scene_id: "ingested".into(),
            view_paths,
            records,
        }],
    };
    manifest.write(out_dir.join("manifest.json"))?;
    Ok(IngestReport { manifest, skipped })
}
