//! Multi-view stand-in: each view is a mildly perspective-warped, shifted,
//! photometrically jittered crop of one base image.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distort::sample_bilinear;
use super::Scene;
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::seed::{derive_seed, rng};

/// Smallest accepted base side, in pixels.
pub const MIN_BASE_SIDE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewJitter {
    /// Square view side; `None` keeps the base size.
    pub view_size: Option<usize>,
    /// Maximum shift of the crop centre, as a fraction of the base extent.
    pub center_shift: f64,
    /// Maximum corner perturbation, as a fraction of the view extent (≤ 0.1).
    pub corner_jitter: f64,
    /// Gain drawn from `1 ± gain_jitter` (≤ 0.1).
    pub gain_jitter: f64,
    /// Bias drawn from `± bias_jitter` (≤ 0.1).
    pub bias_jitter: f64,
}

impl Default for ViewJitter {
    fn default() -> Self {
        Self {
            view_size: Some(154),
            center_shift: 0.08,
            corner_jitter: 0.06,
            gain_jitter: 0.08,
            bias_jitter: 0.04,
        }
    }
}

impl ViewJitter {
    /// No perturbation at all: every view is the base image.
    pub fn identity() -> Self {
        Self {
            view_size: None,
            center_shift: 0.0,
            corner_jitter: 0.0,
            gain_jitter: 0.0,
            bias_jitter: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, max: f64| {
            if (0.0..=max).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "{name} must lie in [0, {max}], got {v}"
                )))
            }
        };
        check("center_shift", self.center_shift, 0.5)?;
        check("corner_jitter", self.corner_jitter, 0.1)?;
        check("gain_jitter", self.gain_jitter, 0.1)?;
        check("bias_jitter", self.bias_jitter, 0.1)
    }
}

/// How one view was derived from the base image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    pub seed: u64,
    /// Row-major 3×3 map from view pixel coordinates to base coordinates.
    pub homography: [f64; 9],
    pub crop_top: usize,
    pub crop_left: usize,
    pub gain: f64,
    pub bias: f64,
}

/// Solves the 3×3 homography (h33 = 1) taking `src[i]` to `dst[i]`.
pub fn homography_from_points(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Result<[f64; 9]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = src[i];
        let (u, v) = dst[i];
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Validation("degenerate homography correspondences".into()))?;
    Ok([h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0])
}

pub fn apply_homography(h: &[f64; 9], x: f64, y: f64) -> (f64, f64) {
    let w = h[6] * x + h[7] * y + h[8];
    ((h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w)
}

/// Produces `n_views` distinct but overlapping views of `base`. Deterministic
/// in `(base, n_views, seed, jitter)`.
pub fn synthesize_views(
    base: &ImageGrid,
    n_views: usize,
    seed: u64,
    jitter: &ViewJitter,
    scene_id: &str,
) -> Result<Scene> {
    if base.height() < MIN_BASE_SIDE || base.width() < MIN_BASE_SIDE {
        return Err(Error::Validation(format!(
            "base image must be at least {MIN_BASE_SIDE}x{MIN_BASE_SIDE}, got {}x{}",
            base.height(),
            base.width()
        )));
    }
    if n_views < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 views, got {n_views}"
        )));
    }
    jitter.validate()?;
    let (bh, bw, channels) = base.dims();
    let side = jitter.view_size.unwrap_or(bh.min(bw));
    let (vh, vw) = match jitter.view_size {
        Some(_) => (side, side),
        None => (bh, bw),
    };
    if vh > bh || vw > bw {
        return Err(Error::Validation(format!(
            "view size {vh}x{vw} exceeds base {bh}x{bw}"
        )));
    }

    let mut views = Vec::with_capacity(n_views);
    let mut metadata = Vec::with_capacity(n_views);
    for i in 0..n_views {
        let view_seed = derive_seed(seed, &[b"view", &(i as u64).to_le_bytes()]);
        let mut r = rng(view_seed);
        let mut uniform = |amp: f64| if amp > 0.0 { r.random_range(-amp..=amp) } else { 0.0 };

        // crop centre shifted around the base centre, kept inside the image
        let slack_y = (bh - vh) as f64 / 2.0;
        let slack_x = (bw - vw) as f64 / 2.0;
        let dy = uniform(jitter.center_shift * bh as f64).clamp(-slack_y, slack_y);
        let dx = uniform(jitter.center_shift * bw as f64).clamp(-slack_x, slack_x);
        let top = (slack_y + dy).round() as usize;
        let left = (slack_x + dx).round() as usize;

        let corners = [(0.0, 0.0), (vw as f64, 0.0), (vw as f64, vh as f64), (0.0, vh as f64)];
        let amp = jitter.corner_jitter * vh.max(vw) as f64;
        let offsets: Vec<(f64, f64)> = (0..4).map(|_| (uniform(amp), uniform(amp))).collect();
        let gain = 1.0 + uniform(jitter.gain_jitter);
        let bias = uniform(jitter.bias_jitter);

        let warped = offsets.iter().any(|(a, b)| *a != 0.0 || *b != 0.0);
        let dst: [(f64, f64); 4] = std::array::from_fn(|k| {
            (
                corners[k].0 + left as f64 + offsets[k].0,
                corners[k].1 + top as f64 + offsets[k].1,
            )
        });
        let homography = homography_from_points(&corners, &dst)?;

        let mut data = Vec::with_capacity(vh * vw * channels);
        for y in 0..vh {
            for x in 0..vw {
                for c in 0..channels {
                    let v = if warped {
                        let (sx, sy) =
                            apply_homography(&homography, x as f64 + 0.5, y as f64 + 0.5);
                        sample_bilinear(base, sx - 0.5, sy - 0.5, c)
                    } else {
                        f64::from(base.get(y + top, x + left, c))
                    };
                    let v = if gain == 1.0 && bias == 0.0 {
                        v
                    } else {
                        (gain * v + bias).clamp(0.0, 1.0)
                    };
                    data.push(v as f32);
                }
            }
        }
        views.push(ImageGrid::from_raw(vh, vw, channels, data));
        metadata.push(ViewMeta {
            seed: view_seed,
            homography,
            crop_top: top,
            crop_left: left,
            gain,
            bias,
        });
    }
    Ok(Scene {
        scene_id: scene_id.to_string(),
        views,
        view_metadata: metadata,
    })
}
