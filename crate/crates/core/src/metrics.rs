//! Full-reference metric kernels and correlation statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageGrid, ScoreMap};

/// SSIM window and stabilising constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size % 2 == 0 {
            return Err(Error::Validation(format!(
                "SSIM window size must be odd and positive, got {}",
                self.window_size
            )));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("SSIM {name} must be > 0, got {v}")))
            }
        };
        positive("gaussian_sigma", self.gaussian_sigma)?;
        positive("k1", self.k1)?;
        positive("k2", self.k2)?;
        positive("dynamic_range", self.dynamic_range)
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn gaussian_taps(&self) -> Vec<f64> {
        let r = (self.window_size / 2) as f64;
        let two_var = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let raw: Vec<f64> = (0..self.window_size)
            .map(|k| {
                let d = k as f64 - r;
                (-d * d / two_var).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Mirror index into `0..n` without repeating the edge sample
/// (`-1 -> 1`, `n -> n-2`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Separable filter of a single plane with reflected borders.
fn filter_plane(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[reflect_index(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let src = reflect_index(y as isize + k as isize - r, h);
            let src_row = &tmp[src * w..(src + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    out
}

fn check_same_dims(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "image dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Per-pixel SSIM map with a Gaussian window, reflected borders and an
/// unweighted mean across channels. Output has the input's H×W extent.
pub fn ssim_map(query: &ImageGrid, truth: &ImageGrid, params: &SsimParams) -> Result<ScoreMap> {
    check_same_dims(query, truth)?;
    params.validate()?;
    let (h, w, channels) = query.dims();
    let taps = params.gaussian_taps();
    let (c1, c2) = (params.c1(), params.c2());
    let mut acc = vec![0.0f64; h * w];
    let plane = |img: &ImageGrid, c: usize| -> Vec<f64> {
        img.data()
            .iter()
            .skip(c)
            .step_by(channels)
            .map(|v| f64::from(*v))
            .collect()
    };
    for c in 0..channels {
        let x = plane(query, c);
        let y = plane(truth, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mu_x = filter_plane(&x, h, w, &taps);
        let mu_y = filter_plane(&y, h, w, &taps);
        let e_xx = filter_plane(&xx, h, w, &taps);
        let e_yy = filter_plane(&yy, h, w, &taps);
        let e_xy = filter_plane(&xy, h, w, &taps);
        for i in 0..h * w {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
            acc[i] += num / den;
        }
    }
    let data = acc
        .into_iter()
        .map(|v| (v / channels as f64) as f32)
        .collect();
    ScoreMap::new(h, w, data)
}

/// Clamps every value into [0, 1].
pub fn clamp_unit(map: &ScoreMap) -> ScoreMap {
    let data = map.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ScoreMap::new(map.height(), map.width(), data).expect("same shape")
}

/// PSNR in dB with peak 1.0. Identical images give `f64::INFINITY`.
pub fn psnr(query: &ImageGrid, truth: &ImageGrid) -> Result<f64> {
    check_same_dims(query, truth)?;
    let n = query.data().len() as f64;
    let mse = query
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| {
            let d = f64::from(*a) - f64::from(*b);
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Arithmetic mean over the selected pixels (all pixels when `mask` is None).
pub fn mean_score(map: &ScoreMap, mask: Option<&[bool]>) -> Result<f64> {
    match mask {
        None => {
            Ok(map.data().iter().map(|v| f64::from(*v)).sum::<f64>() / map.data().len() as f64)
        }
        Some(mask) => {
            if mask.len() != map.data().len() {
                return Err(Error::Shape(format!(
                    "mask length {} != map size {}",
                    mask.len(),
                    map.data().len()
                )));
            }
            let (sum, count) = map
                .data()
                .iter()
                .zip(mask)
                .filter(|(_, m)| **m)
                .fold((0.0, 0usize), |(s, n), (v, _)| (s + f64::from(*v), n + 1));
            if count == 0 {
                return Err(Error::Validation("mask selects no pixels".into()));
            }
            Ok(sum / count as f64)
        }
    }
}

/// Drops index pairs where either entry is NaN, logging how many were skipped.
fn pairwise_finite(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(a, b)| (*a, *b))
        .unzip();
    let skipped = x.len() - xs.len();
    if skipped > 0 {
        log::warn!("correlation: skipped {skipped} pair(s) containing NaN");
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 paired values, got {}",
            xs.len()
        )));
    }
    Ok((xs, ys))
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "series has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation. NaN pairs are skipped with a warning.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let (x, y) = pairwise_finite(x, y)?;
    pearson_unchecked(&x, &y)
}

/// 1-based fractional ranks; tied values share the mean of their positions.
/// The flag reports whether any tie was seen.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, bool) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tied = false;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        if j > i {
            tied = true;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    (ranks, tied)
}

/// Spearman rank correlation. Ties receive averaged ranks; the result is the
/// Pearson correlation of the rank vectors, which reduces to
/// `1 - 6 Σd² / (n(n²-1))` when no ties are present.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    let (x, y) = pairwise_finite(x, y)?;
    let (rx, tx) = average_ranks(&x);
    let (ry, ty) = average_ranks(&y);
    if tx || ty {
        return pearson_unchecked(&rx, &ry);
    }
    let n = rx.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}
