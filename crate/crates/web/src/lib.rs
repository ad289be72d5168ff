//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Images cross the boundary as RGBA bytes, the layout of `ImageData`.
//! The plain functions are usable natively; the `wasm_bindgen` wrappers turn
//! errors into JS exceptions.

use criqa_core::datagen::procedural::procedural_base;
use criqa_core::datagen::{apply_distortion, synthesize_views, DistortionKind, DistortionSpec, ViewJitter};
use criqa_core::eval::colormap;
use criqa_core::image::ImageGrid;
use criqa_core::metrics::{clamp_unit, mean_score, pearson, spearman, ssim_map};
use criqa_core::{Result, ScoreMap, SsimParams};
use wasm_bindgen::prelude::*;

pub fn rgba_to_grid(rgba: &[u8], width: usize, height: usize) -> Result<ImageGrid> {
    if rgba.len() != width * height * 4 {
        return Err(criqa_core::Error::Shape(format!(
            "expected {} RGBA bytes for {width}x{height}, got {}",
            width * height * 4,
            rgba.len()
        )));
    }
    let data = rgba
        .chunks_exact(4)
        .flat_map(|p| p[..3].iter().map(|v| f32::from(*v) / 255.0))
        .collect();
    ImageGrid::new(height, width, 3, data)
}

pub fn grid_to_rgba(img: &ImageGrid) -> Vec<u8> {
    let bytes = img.to_u8();
    let c = img.channels();
    let mut out = Vec::with_capacity(img.height() * img.width() * 4);
    for px in bytes.chunks_exact(c) {
        if c == 1 {
            out.extend_from_slice(&[px[0], px[0], px[0], 255]);
        } else {
            out.extend_from_slice(&[px[0], px[1], px[2], 255]);
        }
    }
    out
}

pub fn heatmap_rgba(map: &ScoreMap) -> Vec<u8> {
    map.data()
        .iter()
        .flat_map(|v| {
            let [r, g, b] = colormap(*v);
            [r, g, b, 255]
        })
        .collect()
}

/// Distorted image, its clamped SSIM map against the input, and the map mean.
#[wasm_bindgen]
pub struct Distorted {
    distorted: Vec<u8>,
    heatmap: Vec<u8>,
    mean: f64,
}

#[wasm_bindgen]
impl Distorted {
    #[wasm_bindgen(getter)]
    pub fn distorted(&self) -> Vec<u8> {
        self.distorted.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn heatmap(&self) -> Vec<u8> {
        self.heatmap.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.mean
    }
}

pub fn distort(rgba: &[u8], width: usize, height: usize, kind: &str, severity: f64, seed: u64) -> Result<Distorted> {
    let img = rgba_to_grid(rgba, width, height)?;
    let kind: DistortionKind = kind.parse()?;
    let out = apply_distortion(&img, &DistortionSpec::new(kind, severity, seed))?;
    let map = clamp_unit(&ssim_map(&out, &img, &SsimParams::default())?);
    Ok(Distorted {
        distorted: grid_to_rgba(&out),
        mean: mean_score(&map, None)?,
        heatmap: heatmap_rgba(&map),
    })
}

/// Views of one procedural scene, each `size`×`size`, RGBA concatenated.
pub fn scene_views(seed: u64, n_views: usize, size: usize) -> Result<Vec<u8>> {
    let base = procedural_base(seed, 256.max(size), 3);
    let jitter = ViewJitter {
        view_size: Some(size),
        ..ViewJitter::default()
    };
    let scene = synthesize_views(&base, n_views, seed, &jitter, "preview")?;
    Ok(scene.views.iter().flat_map(grid_to_rgba).collect())
}

/// `[pearson, spearman]`; an undefined coefficient is NaN.
pub fn correlations(x: &[f64], y: &[f64]) -> Vec<f64> {
    vec![
        pearson(x, y).unwrap_or(f64::NAN),
        spearman(x, y).unwrap_or(f64::NAN),
    ]
}

fn js_err(e: criqa_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen(js_name = distort)]
pub fn distort_js(rgba: &[u8], width: usize, height: usize, kind: &str, severity: f64, seed: u32) -> std::result::Result<Distorted, JsValue> {
    distort(rgba, width, height, kind, severity, u64::from(seed)).map_err(js_err)
}

#[wasm_bindgen(js_name = sceneViews)]
pub fn scene_views_js(seed: u32, n_views: usize, size: usize) -> std::result::Result<Vec<u8>, JsValue> {
    scene_views(u64::from(seed), n_views, size).map_err(js_err)
}

#[wasm_bindgen(js_name = correlations)]
pub fn correlations_js(x: &[f64], y: &[f64]) -> Vec<f64> {
    correlations(x, y)
}

#[wasm_bindgen(js_name = distortionKinds)]
pub fn distortion_kinds() -> Vec<String> {
    DistortionKind::ALL.iter().map(|k| k.to_string()).collect()
}
