use crate::error::{Result, SmoeError};
use crate::model::BlockData;

/// Grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SmoeError::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(SmoeError::invalid(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SmoeError::invalid(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by clamping every value into `[0, 1]`. NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let pixels = values
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_shape(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Sub-image with top-left corner `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(SmoeError::invalid("crop extends beyond the image"));
        }
        Self::from_fn(width, height, |r, c| self.get(row + r, col + c))
    }

    /// Left-right mirror.
    pub fn mirror_horizontal(&self) -> Self {
        let w = self.width;
        GrayImage {
            width: w,
            height: self.height,
            pixels: (0..self.pixels.len())
                .map(|i| self.pixels[i - i % w + (w - 1 - i % w)])
                .collect(),
        }
    }

    /// Rounds every pixel to the nearest of the 256 levels `k/255`.
    pub fn quantized(&self) -> Self {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|&v| quantize(v) as f64 / 255.0)
                .collect(),
        }
    }

    /// Row-major values of the `size × size` block at `origin`.
    pub fn block_values(&self, origin: (usize, usize), size: usize) -> Vec<f64> {
        let (r0, c0) = origin;
        let mut out = Vec::with_capacity(size * size);
        for r in r0..r0 + size {
            let start = r * self.width + c0;
            out.extend_from_slice(&self.pixels[start..start + size]);
        }
        out
    }

    /// The block at `origin` as fitting data.
    pub fn block(&self, origin: (usize, usize), size: usize) -> Result<BlockData<2>> {
        if origin.0 + size > self.height || origin.1 + size > self.width {
            return Err(SmoeError::invalid(format!(
                "block at {origin:?} of size {size} extends beyond the image"
            )));
        }
        BlockData::regular(self.block_values(origin, size), origin, size)
    }
}

/// `round(clamp(v, 0, 1) · 255)` with halves rounded up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// Per-pixel weighted sums used to merge overlapping block predictions.
#[derive(Debug, Clone)]
pub struct PixelAccumulator {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    weight: Vec<f64>,
}

impl PixelAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        PixelAccumulator {
            width,
            height,
            sum: vec![0.0; width * height],
            weight: vec![0.0; width * height],
        }
    }

    /// Adds a row-major `rows × cols` patch at `origin` with a common weight.
    pub fn add_patch(
        &mut self,
        origin: (usize, usize),
        rows: usize,
        cols: usize,
        values: &[f64],
        weight: f64,
    ) {
        debug_assert_eq!(values.len(), rows * cols);
        debug_assert!(weight >= 0.0);
        for r in 0..rows {
            let base = (origin.0 + r) * self.width + origin.1;
            let src = &values[r * cols..(r + 1) * cols];
            for (c, v) in src.iter().enumerate() {
                self.sum[base + c] += weight * v;
                self.weight[base + c] += weight;
            }
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weight[row * self.width + col]
    }

    /// `sum / weight` per pixel, clamped to `[0, 1]`. Fails if any pixel was
    /// never covered.
    pub fn finalize(self) -> Result<GrayImage> {
        if let Some(i) = self.weight.iter().position(|&w| !(w > 0.0)) {
            return Err(SmoeError::Internal(format!(
                "pixel ({}, {}) is not covered by any block",
                i / self.width,
                i % self.width
            )));
        }
        let values = self
            .sum
            .iter()
            .zip(&self.weight)
            .map(|(s, w)| s / w)
            .collect();
        GrayImage::from_clamped(self.width, self.height, values)
    }
}
