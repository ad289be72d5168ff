//! Parametric distortions standing in for rendering artefacts.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::metrics::reflect_index;
use crate::seed::{derive_seed, rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    GaussianBlur,
    AdditiveNoise,
    BlockArtifact,
    ElasticWarp,
    IntensityShift,
    Mixture,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 6] = [
        DistortionKind::GaussianBlur,
        DistortionKind::AdditiveNoise,
        DistortionKind::BlockArtifact,
        DistortionKind::ElasticWarp,
        DistortionKind::IntensityShift,
        DistortionKind::Mixture,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::AdditiveNoise => "additive_noise",
            DistortionKind::BlockArtifact => "block_artifact",
            DistortionKind::ElasticWarp => "elastic_warp",
            DistortionKind::IntensityShift => "intensity_shift",
            DistortionKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown distortion kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub severity: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, severity: f64, seed: u64) -> Self {
        Self {
            kind,
            severity,
            seed,
        }
    }
}

/// Maps severity in [0, 1] to physical distortion parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionRanges {
    /// Blur sigma in pixels at severity 1.
    pub blur_sigma: f64,
    /// Noise standard deviation at severity 1.
    pub noise_std: f64,
    /// Side of the blocks whose means pixels are pulled toward.
    pub block_size: usize,
    /// Peak displacement in pixels at severity 1.
    pub warp_amplitude: f64,
    /// Spacing of the random displacement control grid, in pixels.
    pub warp_grid: usize,
    /// Brightness offset at severity 1.
    pub intensity_offset: f64,
    /// Fractional contrast loss at severity 1.
    pub contrast_loss: f64,
}

impl Default for DistortionRanges {
    fn default() -> Self {
        Self {
            blur_sigma: 8.0,
            noise_std: 0.25,
            block_size: 8,
            warp_amplitude: 6.0,
            warp_grid: 24,
            intensity_offset: 0.35,
            contrast_loss: 0.5,
        }
    }
}

/// Applies the distortion with default severity ranges.
pub fn apply_distortion(img: &ImageGrid, spec: &DistortionSpec) -> Result<ImageGrid> {
    apply_distortion_with(img, spec, &DistortionRanges::default())
}

/// Deterministic in `(img, spec, ranges)`. Severity 0 returns the input
/// unchanged, bit for bit.
pub fn apply_distortion_with(
    img: &ImageGrid,
    spec: &DistortionSpec,
    ranges: &DistortionRanges,
) -> Result<ImageGrid> {
    let s = spec.severity;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Validation(format!(
            "severity must lie in [0, 1], got {s}"
        )));
    }
    if s == 0.0 {
        return Ok(img.clone());
    }
    let out = match spec.kind {
        DistortionKind::GaussianBlur => gaussian_blur(img, ranges.blur_sigma * s),
        DistortionKind::AdditiveNoise => additive_noise(img, ranges.noise_std * s, spec.seed),
        DistortionKind::BlockArtifact => block_artifact(img, ranges.block_size.max(1), s),
        DistortionKind::ElasticWarp => elastic_warp(img, ranges, s, spec.seed),
        DistortionKind::IntensityShift => intensity_shift(img, ranges, s, spec.seed),
        DistortionKind::Mixture => mixture(img, ranges, s, spec.seed)?,
    };
    Ok(out)
}

fn map_values(img: &ImageGrid, data: Vec<f32>) -> ImageGrid {
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ImageGrid::from_raw(img.height(), img.width(), img.channels(), data)
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(img: &ImageGrid, sigma: f64) -> ImageGrid {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.into_iter().map(|t| t / total).collect();
    let (h, w, c) = img.dims();
    let src = img.data();
    let mut tmp = vec![0.0f64; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for (k, t) in taps.iter().enumerate() {
                let sx = reflect_index(x as isize + k as isize - radius, w);
                let base = (y * w + sx) * c;
                for ch in 0..c {
                    tmp[(y * w + x) * c + ch] += t * f64::from(src[base + ch]);
                }
            }
        }
    }
    let mut out = vec![0.0f64; h * w * c];
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - radius, h);
            let src_row = &tmp[sy * w * c..(sy + 1) * w * c];
            let dst_row = &mut out[y * w * c..(y + 1) * w * c];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    map_values(img, out.into_iter().map(|v| v as f32).collect())
}

fn additive_noise(img: &ImageGrid, std: f64, seed: u64) -> ImageGrid {
    let mut r = rng(derive_seed(seed, &[b"noise"]));
    let data = img
        .data()
        .iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(&mut r);
            (f64::from(*v) + std * n) as f32
        })
        .collect();
    map_values(img, data)
}

fn block_artifact(img: &ImageGrid, block: usize, s: f64) -> ImageGrid {
    let (h, w, c) = img.dims();
    let mut out = img.data().to_vec();
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let (y1, x1) = ((by + block).min(h), (bx + block).min(w));
            let n = ((y1 - by) * (x1 - bx)) as f64;
            for ch in 0..c {
                let mut sum = 0.0f64;
                for y in by..y1 {
                    for x in bx..x1 {
                        sum += f64::from(img.get(y, x, ch));
                    }
                }
                let mean = sum / n;
                for y in by..y1 {
                    for x in bx..x1 {
                        let i = (y * w + x) * c + ch;
                        out[i] = ((1.0 - s) * f64::from(out[i]) + s * mean) as f32;
                    }
                }
            }
        }
    }
    map_values(img, out)
}

/// Bilinear sample at continuous pixel coordinates; coordinates outside the
/// image are clamped to the border.
pub(crate) fn sample_bilinear(img: &ImageGrid, x: f64, y: f64, ch: usize) -> f64 {
    let (h, w) = (img.height(), img.width());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let v = |yy, xx| f64::from(img.get(yy, xx, ch));
    let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
    let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn elastic_warp(img: &ImageGrid, ranges: &DistortionRanges, s: f64, seed: u64) -> ImageGrid {
    let (h, w, c) = img.dims();
    let spacing = ranges.warp_grid.max(2) as f64;
    let gh = (h as f64 / spacing).ceil() as usize + 2;
    let gw = (w as f64 / spacing).ceil() as usize + 2;
    let mut r = rng(derive_seed(seed, &[b"warp"]));
    let field: Vec<(f64, f64)> = (0..gh * gw)
        .map(|_| (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    let amp = ranges.warp_amplitude * s;
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let gx = x as f64 / spacing;
            let gy = y as f64 / spacing;
            let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            let at = |yy: usize, xx: usize| field[yy * gw + xx];
            let lerp = |a: (f64, f64), b: (f64, f64), t: f64| {
                (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
            };
            let top = lerp(at(iy, ix), at(iy, ix + 1), fx);
            let bottom = lerp(at(iy + 1, ix), at(iy + 1, ix + 1), fx);
            let (dx, dy) = lerp(top, bottom, fy);
            for ch in 0..c {
                out.push(sample_bilinear(img, x as f64 + amp * dx, y as f64 + amp * dy, ch) as f32);
            }
        }
    }
    map_values(img, out)
}

fn intensity_shift(img: &ImageGrid, ranges: &DistortionRanges, s: f64, seed: u64) -> ImageGrid {
    let mut r = rng(derive_seed(seed, &[b"intensity"]));
    let direction = if r.next_u32() & 1 == 0 { 1.0 } else { -1.0 };
    let gain = 1.0 - ranges.contrast_loss * s;
    let offset = direction * ranges.intensity_offset * s;
    let data = img
        .data()
        .iter()
        .map(|v| (0.5 + (f64::from(*v) - 0.5) * gain + offset) as f32)
        .collect();
    map_values(img, data)
}

/// Three randomly chosen primitive distortions applied in sequence, each at
/// a seed-fixed fraction of the overall severity.
fn mixture(img: &ImageGrid, ranges: &DistortionRanges, s: f64, seed: u64) -> Result<ImageGrid> {
    let mut r = rng(derive_seed(seed, &[b"mixture"]));
    let mut pool = vec![
        DistortionKind::GaussianBlur,
        DistortionKind::AdditiveNoise,
        DistortionKind::BlockArtifact,
        DistortionKind::ElasticWarp,
        DistortionKind::IntensityShift,
    ];
    let mut out = img.clone();
    for _ in 0..3 {
        let kind = pool.swap_remove(r.random_range(0..pool.len()));
        let weight: f64 = r.random_range(0.3..1.0);
        let sub = DistortionSpec::new(kind, (s * weight).clamp(0.0, 1.0), r.next_u64());
        out = apply_distortion_with(&out, &sub, ranges)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{mean_score, ssim_map, SsimParams};

    fn checkerboard(n: usize, cell: usize) -> ImageGrid {
        let mut data = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            for x in 0..n {
                let v = if (y / cell + x / cell) % 2 == 0 { 0.9 } else { 0.1 };
                data.extend([v, v, v]);
            }
        }
        ImageGrid::new(n, n, 3, data).unwrap()
    }

    fn mean_ssim(a: &ImageGrid, b: &ImageGrid) -> f64 {
        mean_score(&ssim_map(a, b, &SsimParams::default()).unwrap(), None).unwrap()
    }

    #[test]
    fn severity_zero_is_identity_for_every_kind() {
        let img = checkerboard(32, 4);
        for kind in DistortionKind::ALL {
            let out = apply_distortion(&img, &DistortionSpec::new(kind, 0.0, 99)).unwrap();
            assert_eq!(out, img, "{kind}");
        }
    }

    #[test]
    fn outputs_stay_in_unit_range_and_are_deterministic() {
        let img = checkerboard(32, 4);
        for kind in DistortionKind::ALL {
            let spec = DistortionSpec::new(kind, 0.9, 5);
            let a = apply_distortion(&img, &spec).unwrap();
            let b = apply_distortion(&img, &spec).unwrap();
            assert_eq!(a, b);
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn full_blur_destroys_checkerboard_structure() {
        let img = checkerboard(64, 4);
        let spec = DistortionSpec::new(DistortionKind::GaussianBlur, 1.0, 0);
        let blurred = apply_distortion(&img, &spec).unwrap();
        assert!(mean_ssim(&blurred, &img) < 0.5);
    }

    #[test]
    fn noise_sweep_strictly_decreases_ssim() {
        let img = checkerboard(48, 6);
        let scores: Vec<f64> = [0.2, 0.5, 0.8]
            .iter()
            .map(|s| {
                let spec = DistortionSpec::new(DistortionKind::AdditiveNoise, *s, 17);
                mean_ssim(&apply_distortion(&img, &spec).unwrap(), &img)
            })
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn severity_out_of_range_and_unknown_kind_are_rejected() {
        let img = checkerboard(8, 2);
        let spec = DistortionSpec::new(DistortionKind::GaussianBlur, 1.5, 0);
        assert!(matches!(
            apply_distortion(&img, &spec),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            "jpeg".parse::<DistortionKind>(),
            Err(Error::Validation(_))
        ));
        assert!(serde_json::from_str::<DistortionKind>("\"jpeg\"").is_err());
        assert_eq!(
            "elastic_warp".parse::<DistortionKind>().unwrap(),
            DistortionKind::ElasticWarp
        );
    }

    #[test]
    fn different_noise_seeds_differ() {
        let img = checkerboard(16, 2);
        let a = apply_distortion(&img, &DistortionSpec::new(DistortionKind::AdditiveNoise, 0.5, 1))
            .unwrap();
        let b = apply_distortion(&img, &DistortionSpec::new(DistortionKind::AdditiveNoise, 0.5, 2))
            .unwrap();
        assert!(a.l1_distance(&b).unwrap() > 0.0);
    }
}
