//! Row-major 2D rasters shared by every image-like quantity.

use serde::{Deserialize, Serialize};

/// A row-major `width × height` grid of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// RGB raster with channels in `[0, 1]`.
pub type RgbImage = Raster<[f32; 3]>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    /// Wraps `data`, returning `None` when its length disagrees with the
    /// dimensions.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        let w = self.width;
        &mut self.data[y * w + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Nearest pixel for continuous coordinates, using the convention that
    /// pixel `(i, j)` is centred on `(i, j)` and covers `[i - 0.5, i + 0.5)`.
    pub fn nearest_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ix = (x + 0.5).floor();
        let iy = (y + 0.5).floor();
        if ix >= 0.0 && iy >= 0.0 && (ix as usize) < self.width && (iy as usize) < self.height {
            Some((ix as usize, iy as usize))
        } else {
            None
        }
    }
}

/// Whether continuous pixel coordinates fall inside a `width × height` image.
pub fn in_bounds(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= -0.5 && y >= -0.5 && x < width as f64 - 0.5 && y < height as f64 - 0.5
}
