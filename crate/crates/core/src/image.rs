//! Image and score-map containers plus PNG I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// H×W×C image with unit-interval intensities, row-major, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

/// Pixel rectangle inside a larger image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self {
            top,
            left,
            height,
            width,
        }
    }
}

impl ImageGrid {
    /// Builds an image, rejecting bad shapes and values outside [0, 1].
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::Validation(format!(
                "pixel value {} at index {i} is not a finite value in [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Skips value validation; callers guarantee the invariants.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Same dimensions, every pixel zero.
    pub fn zeros_like(&self) -> Self {
        Self::from_raw(
            self.height,
            self.width,
            self.channels,
            vec![0.0; self.data.len()],
        )
    }

    pub fn crop(&self, rect: CropRect) -> Result<Self> {
        if rect.height == 0
            || rect.width == 0
            || rect.top + rect.height > self.height
            || rect.left + rect.width > self.width
        {
            return Err(Error::Shape(format!(
                "crop {rect:?} outside {}x{} image",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(rect.height * rect.width * c);
        for y in rect.top..rect.top + rect.height {
            let start = (y * self.width + rect.left) * c;
            data.extend_from_slice(&self.data[start..start + rect.width * c]);
        }
        Ok(Self::from_raw(rect.height, rect.width, c, data))
    }

    /// Rounds every value to the nearest 8-bit level, matching what a PNG
    /// round trip would store.
    pub fn quantized_u8(&self) -> Self {
        let data = self
            .data
            .iter()
            .map(|v| (v * 255.0).round() / 255.0)
            .collect();
        Self::from_raw(self.height, self.width, self.channels, data)
    }

    /// Mean absolute difference; images must share dimensions.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "cannot compare {:?} with {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (height, width) = (img.height() as usize, img.width() as usize);
        let (channels, bytes) = match img.color().channel_count() {
            1 | 2 => (1, img.into_luma8().into_raw()),
            _ => (3, img.into_rgb8().into_raw()),
        };
        let data = bytes.into_iter().map(|b| f32::from(b) / 255.0).collect();
        Ok(Self::from_raw(height, width, channels, data))
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Single-channel H×W score map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "score map dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "score map data length {} != {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn crop(&self, rect: CropRect) -> Result<Self> {
        if rect.height == 0
            || rect.width == 0
            || rect.top + rect.height > self.height
            || rect.left + rect.width > self.width
        {
            return Err(Error::Shape(format!(
                "crop {rect:?} outside {}x{} map",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(rect.height * rect.width);
        for y in rect.top..rect.top + rect.height {
            let start = y * self.width + rect.left;
            data.extend_from_slice(&self.data[start..start + rect.width]);
        }
        Ok(Self {
            height: rect.height,
            width: rect.width,
            data,
        })
    }

    /// Mean absolute difference against another map of equal size.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape(format!(
                "cannot compare {}x{} map with {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Largest centered rectangle whose sides are multiples of `multiple` and
/// no larger than `max_side` (when given).
pub fn center_crop_rect(
    height: usize,
    width: usize,
    multiple: usize,
    max_side: Option<usize>,
) -> Result<CropRect> {
    let limit = |n: usize| {
        let n = max_side.map_or(n, |m| n.min(m));
        n - n % multiple
    };
    let (h, w) = (limit(height), limit(width));
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "{height}x{width} image is smaller than one {multiple}x{multiple} patch"
        )));
    }
    Ok(CropRect {
        top: (height - h) / 2,
        left: (width - w) / 2,
        height: h,
        width: w,
    })
}
