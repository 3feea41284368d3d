//! Minimal single-channel raster.

use alloc::vec::Vec;

/// Row-major grayscale image with intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    /// Returns `None` when `data.len() != width * height`.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Pixel containing the continuous coordinate `(x, y)`, clamped to the image.
    pub fn pixel_of(&self, x: f64, y: f64) -> (usize, usize) {
        (clamp_index(x, self.width), clamp_index(y, self.height))
    }
}

pub(crate) fn clamp_index(v: f64, len: usize) -> usize {
    if !(v > 0.0) {
        0
    } else {
        (v as usize).min(len.saturating_sub(1))
    }
}
