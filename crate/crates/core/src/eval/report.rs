//! Report files and colour-coded score overlays.

use std::fs;
use std::path::{Path, PathBuf};

use super::EvalReport;
use crate::error::{Error, Result};
use crate::image::ScoreMap;

/// Colour stops from the highest score down: red, orange, green, blue.
const STOPS: [(f32, [f32; 3]); 4] = [
    (1.0, [255.0, 0.0, 0.0]),
    (2.0 / 3.0, [255.0, 165.0, 0.0]),
    (1.0 / 3.0, [0.0, 200.0, 0.0]),
    (0.0, [0.0, 0.0, 255.0]),
];

/// Maps a score in [0,1] (clamped) to an RGB colour.
pub fn colormap(score: f32) -> [u8; 3] {
    let s = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
    for w in STOPS.windows(2) {
        let ((hi, c_hi), (lo, c_lo)) = (w[0], w[1]);
        if s >= lo {
            let t = (s - lo) / (hi - lo);
            let mut out = [0u8; 3];
            for k in 0..3 {
                out[k] = (c_lo[k] + t * (c_hi[k] - c_lo[k])).round() as u8;
            }
            return out;
        }
    }
    [0, 0, 255]
}

/// Writes a colour-coded PNG of a score map.
pub fn render_overlay(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(map.data().len() * 3);
    for v in map.data() {
        buf.extend_from_slice(&colormap(*v));
    }
    let img = image::RgbImage::from_raw(map.width() as u32, map.height() as u32, buf)
        .expect("buffer matches map size");
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub overlays: Vec<PathBuf>,
}

fn f(v: f64) -> String {
    v.to_string()
}

/// Writes `report.json`, `report.csv` (one row per image plus one summary
/// row per scene) and one overlay PNG per supplied map.
pub fn render_report(
    report: &EvalReport,
    out_dir: impl AsRef<Path>,
    maps: &[(String, ScoreMap)],
) -> Result<ReportFiles> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let json = out.join("report.json");
    let mut text = serde_json::to_string_pretty(report).expect("report serialises");
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;

    let csv_path = out.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["row_type", "scene_id", "image_id", "ssim", "cross", "psnr", "pearson"])?;
    for s in &report.scenes {
        for r in &s.per_image {
            w.write_record([
                "image",
                &s.scene_id,
                &r.image_id,
                &f(r.ssim),
                &f(r.cross),
                &f(r.psnr),
                "",
            ])?;
        }
        w.write_record([
            "scene",
            &s.scene_id,
            "",
            &f(s.mean_ssim),
            &f(s.mean_cross),
            &f(s.mean_psnr),
            &f(s.pearson),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let mut overlays = Vec::with_capacity(maps.len());
    if !maps.is_empty() {
        let dir = out.join("overlays");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (id, m) in maps {
            let name: String = id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            let p = dir.join(format!("{name}.png"));
            render_overlay(m, &p)?;
            overlays.push(p);
        }
    }
    Ok(ReportFiles {
        json,
        csv: csv_path,
        overlays,
    })
}
