//! Image, flow and mask containers plus warping and quality metrics.

mod io;
mod metrics;
mod warp;

pub use io::{read_flow, read_image_png, read_mask_png, write_flow, write_image_png, write_mask_png};
pub use metrics::{masked_psnr, psnr, ssim, PSNR_CAP_DB};
pub use warp::warp_backward;

use crate::error::{BlurefError, Result};

/// Luma weights used for every RGB -> gray conversion in the pipeline.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// H x W x C raster with channel values in `[0, 1]`, stored row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(BlurefError::InvalidInput(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(BlurefError::DimensionMismatch(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels]).unwrap()
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::constant(height, width, channels, 0.0)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data).unwrap()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Bilinear sample at real coordinates, edge-clamped.
    pub fn sample_bilinear(&self, y: f32, x: f32, c: usize) -> f32 {
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f32;
        let fy = yc - y0 as f32;
        let v00 = self.get(y0, x0, c);
        let v01 = self.get(y0, x1, c);
        let v10 = self.get(y1, x0, c);
        let v11 = self.get(y1, x1, c);
        let top = v00 + fx * (v01 - v00);
        let bot = v10 + fx * (v11 - v10);
        top + fy * (bot - top)
    }

    /// Catmull-Rom sample at real coordinates, edge-clamped, result clipped to [0,1].
    pub fn sample_bicubic(&self, y: f32, x: f32, c: usize) -> f32 {
        fn cubic(t: f32) -> [f32; 4] {
            // Catmull-Rom weights for offsets -1..2
            let t2 = t * t;
            let t3 = t2 * t;
            [
                0.5 * (-t3 + 2.0 * t2 - t),
                0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
                0.5 * (-3.0 * t3 + 4.0 * t2 + t),
                0.5 * (t3 - t2),
            ]
        }
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xc.floor() as isize;
        let y0 = yc.floor() as isize;
        let wx = cubic(xc - x0 as f32);
        let wy = cubic(yc - y0 as f32);
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let yy = (y0 + j as isize - 1).clamp(0, self.height as isize - 1) as usize;
            for (i, wxi) in wx.iter().enumerate() {
                let xx = (x0 + i as isize - 1).clamp(0, self.width as isize - 1) as usize;
                acc += wyj * wxi * self.get(yy, xx, c);
            }
        }
        acc.clamp(0.0, 1.0)
    }

    pub fn resize_bilinear(&self, new_height: usize, new_width: usize) -> Image {
        self.resize_with(new_height, new_width, |img, y, x, c| img.sample_bilinear(y, x, c))
    }

    pub fn resize_bicubic(&self, new_height: usize, new_width: usize) -> Image {
        self.resize_with(new_height, new_width, |img, y, x, c| img.sample_bicubic(y, x, c))
    }

    fn resize_with(
        &self,
        new_height: usize,
        new_width: usize,
        sample: impl Fn(&Image, f32, f32, usize) -> f32,
    ) -> Image {
        let sy = self.height as f32 / new_height as f32;
        let sx = self.width as f32 / new_width as f32;
        Image::from_fn(new_height, new_width, self.channels, |y, x, c| {
            let src_y = (y as f32 + 0.5) * sy - 0.5;
            let src_x = (x as f32 + 0.5) * sx - 0.5;
            sample(self, src_y, src_x, c)
        })
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(BlurefError::InvalidInput(format!(
                "crop {}x{}+{}+{} exceeds {}x{}",
                height, width, top, left, self.height, self.width
            )));
        }
        Ok(Image::from_fn(height, width, self.channels, |y, x, c| {
            self.get(top + y, left + x, c)
        }))
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
    }

    pub fn flip_vertical(&self) -> Image {
        Image::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(self.height - 1 - y, x, c)
        })
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Single-channel luma image (fixed weights); identity for grayscale input.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        Image::from_fn(self.height, self.width, 1, |y, x, _| {
            (0..3).map(|c| LUMA_WEIGHTS[c] * self.get(y, x, c)).sum()
        })
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert!(self.same_dims(other));
        let n = self.data.len() as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn in_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Per-pixel 2-vector displacement: output pixel `(y, x)` reads the source at
/// `(y + dy, x + dx)` under the backward-warp convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    dx: Vec<f32>,
    dy: Vec<f32>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, dx: Vec<f32>, dy: Vec<f32>) -> Result<Self> {
        if dx.len() != height * width || dy.len() != height * width {
            return Err(BlurefError::DimensionMismatch(format!(
                "flow planes {}x{} vs dx {} dy {}",
                height,
                width,
                dx.len(),
                dy.len()
            )));
        }
        if dx.iter().chain(dy.iter()).any(|v| !v.is_finite()) {
            return Err(BlurefError::Numerical("flow field contains non-finite values".into()));
        }
        Ok(Self { height, width, dx, dy })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, dx: vec![0.0; height * width], dy: vec![0.0; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut dx = Vec::with_capacity(height * width);
        let mut dy = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (fx, fy) = f(y, x);
                dx.push(fx);
                dy.push(fy);
            }
        }
        Self { height, width, dx, dy }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, dx: f32, dy: f32) {
        let i = y * self.width + x;
        self.dx[i] = dx;
        self.dy[i] = dy;
    }

    pub fn dx(&self) -> &[f32] {
        &self.dx
    }

    pub fn dy(&self) -> &[f32] {
        &self.dy
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<FlowField> {
        if top + height > self.height || left + width > self.width {
            return Err(BlurefError::InvalidInput("flow crop out of bounds".into()));
        }
        Ok(FlowField::from_fn(height, width, |y, x| self.get(top + y, left + x)))
    }

    /// Mean Euclidean distance to another flow, optionally restricted to a mask.
    pub fn endpoint_error(&self, other: &FlowField, mask: Option<&BinaryMask>) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(m) = mask {
                    if m.get(y, x) == 0 {
                        continue;
                    }
                }
                let (ax, ay) = self.get(y, x);
                let (bx, by) = other.get(y, x);
                let ex = (ax - bx) as f64;
                let ey = (ay - by) as f64;
                sum += (ex * ex + ey * ey).sqrt();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Per-pixel match certainty in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(BlurefError::DimensionMismatch(format!(
                "confidence {}x{} vs {} values",
                height,
                width,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(BlurefError::InvalidInput("confidence values outside [0,1]".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Self {
        Self::new(height, width, vec![value; height * width]).unwrap()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    /// Threshold at `tau` (inclusive): 1 where `conf >= tau`.
    pub fn binarize(&self, tau: f32) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| u8::from(v >= tau)).collect(),
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<ConfidenceMap> {
        if top + height > self.height || left + width > self.width {
            return Err(BlurefError::InvalidInput("confidence crop out of bounds".into()));
        }
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(self.get(top + y, left + x));
            }
        }
        ConfidenceMap::new(height, width, values)
    }
}

/// Per-pixel mask with values exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != height * width {
            return Err(BlurefError::DimensionMismatch(format!(
                "mask {}x{} vs {} values",
                height,
                width,
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(BlurefError::InvalidInput("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![1; height * width] }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![0; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(u8::from(f(y, x)));
            }
        }
        Self { height, width, values }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        debug_assert!(v <= 1);
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count_ones() as f64 / self.values.len() as f64
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<BinaryMask> {
        if top + height > self.height || left + width > self.width {
            return Err(BlurefError::InvalidInput("mask crop out of bounds".into()));
        }
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(self.get(top + y, left + x));
            }
        }
        BinaryMask::new(height, width, values)
    }
}
