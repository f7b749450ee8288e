//! Photometric and depth objectives: L1, SSIM, Pearson depth correlation and
//! their weighted sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, RgbImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("rasters differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("mask selects no pixel")]
    EmptyMask,
    #[error("image {0}x{1} is smaller than the {WINDOW}x{WINDOW} SSIM window")]
    ImageTooSmall(usize, usize),
    #[error("depth has fewer than two valid pixels or zero variance")]
    DegenerateVariance,
    #[error("loss weights must lie in [0, 1]: {0:?}")]
    InvalidWeights(LossWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_ssim: f64,
    pub lambda_depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ssim: 0.2,
            lambda_depth: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if ok(self.lambda_ssim) && ok(self.lambda_depth) {
            Ok(())
        } else {
            Err(LossError::InvalidWeights(*self))
        }
    }
}

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shape<A, B>(a: &Raster<A>, b: &Raster<B>) -> Result<(), LossError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(LossError::DimensionMismatch(
            (a.width, a.height),
            (b.width, b.height),
        ))
    }
}

/// Mean absolute difference over the selected pixels and all channels.
pub fn l1_loss(img: &RgbImage, reference: &RgbImage, mask: Option<&Raster<bool>>) -> Result<f64, LossError> {
    check_shape(img, reference)?;
    if let Some(m) = mask {
        check_shape(img, m)?;
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..img.len() {
        if mask.is_some_and(|m| !m.data[i]) {
            continue;
        }
        for c in 0..3 {
            sum += (img.data[i][c] as f64 - reference.data[i][c] as f64).abs();
        }
        count += 3;
    }
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    Ok(sum / count as f64)
}

fn gaussian_window() -> Vec<f64> {
    let r = (WINDOW / 2) as f64;
    let g: Vec<f64> = (0..WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over every fully contained window position and channel.
pub fn ssim(img: &RgbImage, reference: &RgbImage) -> Result<f64, LossError> {
    check_shape(img, reference)?;
    let (w, h) = (img.width, img.height);
    if w < WINDOW || h < WINDOW {
        return Err(LossError::ImageTooSmall(w, h));
    }
    let g = gaussian_window();
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = img.data.iter().map(|p| p[c] as f64).collect();
        let y: Vec<f64> = reference.data.iter().map(|p| p[c] as f64).collect();
        for oy in 0..oh {
            for ox in 0..ow {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, gy) in g.iter().enumerate() {
                    for (i, gx) in g.iter().enumerate() {
                        let k = (oy + j) * w + ox + i;
                        let wgt = gx * gy;
                        mx += wgt * x[k];
                        my += wgt * y[k];
                        xx += wgt * x[k] * x[k];
                        yy += wgt * y[k] * y[k];
                        xy += wgt * x[k] * y[k];
                    }
                }
                let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            }
        }
    }
    Ok(total / (3 * ow * oh) as f64)
}

pub fn ssim_loss(img: &RgbImage, reference: &RgbImage) -> Result<f64, LossError> {
    Ok(1.0 - ssim(img, reference)?)
}

/// `1 − ρ` between two depth rasters over pixels that are selected by
/// `valid` (when given) and finite in both.
pub fn pearson_depth_loss(
    depth: &Raster<f64>,
    reference: &Raster<f64>,
    valid: Option<&Raster<bool>>,
) -> Result<f64, LossError> {
    check_shape(depth, reference)?;
    if let Some(m) = valid {
        check_shape(depth, m)?;
    }
    let idx: Vec<usize> = (0..depth.len())
        .filter(|&i| valid.is_none_or(|m| m.data[i]))
        .filter(|&i| depth.data[i].is_finite() && reference.data[i].is_finite())
        .collect();
    if idx.len() < 2 {
        return Err(LossError::DegenerateVariance);
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| depth.data[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| reference.data[i]).sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (a, b) = (depth.data[i] - ma, reference.data[i] - mb);
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(LossError::DegenerateVariance);
    }
    let rho = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub ssim: f64,
    pub depth: f64,
    pub total: f64,
}

/// `(1 − λ_ssim)·L1 + λ_ssim·L_ssim + λ_depth·L_depth`.
pub fn combined_loss(
    img: &RgbImage,
    reference: &RgbImage,
    depth: &Raster<f64>,
    reference_depth: &Raster<f64>,
    valid: Option<&Raster<bool>>,
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    weights.validate()?;
    let l1 = l1_loss(img, reference, None)?;
    let ssim = ssim_loss(img, reference)?;
    let depth = pearson_depth_loss(depth, reference_depth, valid)?;
    Ok(LossBreakdown {
        l1,
        ssim,
        depth,
        total: (1.0 - weights.lambda_ssim) * l1 + weights.lambda_ssim * ssim + weights.lambda_depth * depth,
    })
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`.
pub fn psnr(img: &RgbImage, reference: &RgbImage) -> Result<f64, LossError> {
    check_shape(img, reference)?;
    if img.is_empty() {
        return Err(LossError::EmptyMask);
    }
    let mut se = 0.0;
    for (a, b) in img.data.iter().zip(&reference.data) {
        for c in 0..3 {
            se += (a[c] as f64 - b[c] as f64).powi(2);
        }
    }
    let mse = se / (3 * img.len()) as f64;
    Ok(10.0 * (1.0 / mse).log10())
}
