use crate::raster::{Raster, RgbImage};

/// Per-pixel Laplacian-of-Gaussian magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMap {
    pub sigma: f64,
    pub values: Raster<f64>,
}

impl LogMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        *self.values.get(x, y)
    }
}

pub fn luma(rgb: &[f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// Sampled Gaussian and its second derivative on `[-r, r]`, `r = ceil(4σ)`.
/// The smoothing kernel sums to one; the second-derivative kernel sums to
/// zero and has second moment 2, so it is exact on constants and quadratics.
fn kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (4.0 * sigma).ceil() as i64;
    let xs: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / sum).collect();
    let s2 = sigma * sigma;
    let mut d2: Vec<f64> = xs
        .iter()
        .zip(&g)
        .map(|(x, gv)| (x * x / (s2 * s2) - 1.0 / s2) * gv)
        .collect();
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    d2.iter_mut().for_each(|v| *v -= mean);
    let moment: f64 = xs.iter().zip(&d2).map(|(x, v)| x * x * v).sum();
    d2.iter_mut().for_each(|v| *v *= 2.0 / moment);
    (g, d2)
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

fn convolve_rows(src: &Raster<f64>, k: &[f64]) -> Raster<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = Raster::filled(src.width, src.height, 0.0);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * src.get(reflect(x as i64 + j as i64 - r, src.width), y);
            }
            *out.get_mut(x, y) = acc;
        }
    }
    out
}

fn convolve_cols(src: &Raster<f64>, k: &[f64]) -> Raster<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = Raster::filled(src.width, src.height, 0.0);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * src.get(x, reflect(y as i64 + j as i64 - r, src.height));
            }
            *out.get_mut(x, y) = acc;
        }
    }
    out
}

/// `|∇²G_σ * gray(image)|` with separable kernels and mirrored borders.
pub fn log_magnitude(image: &RgbImage, sigma: f64) -> LogMap {
    assert!(sigma > 0.0, "sigma must be positive");
    let gray = image.map(luma);
    let (g, d2) = kernels(sigma);
    let xx = convolve_cols(&convolve_rows(&gray, &d2), &g);
    let yy = convolve_rows(&convolve_cols(&gray, &d2), &g);
    let mut values = xx;
    for (v, w) in values.data.iter_mut().zip(&yy.data) {
        *v = (*v + w).abs();
    }
    LogMap { sigma, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_image(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> RgbImage {
        let mut img = Raster::filled(w, h, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                let v = f(x, y);
                *img.get_mut(x, y) = [v, v, v];
            }
        }
        img
    }

    #[test]
    fn kernel_moments() {
        let (g, d2) = kernels(1.6);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(d2.iter().sum::<f64>().abs() < 1e-15);
        assert_eq!(g.len(), 15);
    }

    #[test]
    fn reflect_101() {
        let idx: Vec<_> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn constant_image_is_flat() {
        let m = log_magnitude(&gray_image(20, 15, |_, _| 0.6), 1.6);
        assert!(m.values.data.iter().all(|v| *v < 1e-10));
    }

    #[test]
    fn bright_pixel_peaks_at_itself() {
        let m = log_magnitude(&gray_image(21, 21, |x, y| if (x, y) == (10, 10) { 1.0 } else { 0.0 }), 1.6);
        let (mut best, mut at) = (0.0, (0, 0));
        for y in 0..21 {
            for x in 0..21 {
                if m.at(x, y) > best {
                    best = m.at(x, y);
                    at = (x, y);
                }
            }
        }
        assert_eq!(at, (10, 10));
        let (g, d2) = kernels(1.6);
        let c = g.len() / 2;
        assert!((best - (2.0 * d2[c] * g[c]).abs()).abs() < 1e-12);
    }

    #[test]
    fn linear_in_contrast() {
        let base = |x: usize, y: usize| ((x * 7 + y * 3) % 5) as f32 * 0.1;
        let a = log_magnitude(&gray_image(16, 16, base), 1.6);
        let b = log_magnitude(&gray_image(16, 16, |x, y| 2.0 * base(x, y)), 1.6);
        for (va, vb) in a.values.data.iter().zip(&b.values.data) {
            assert!((2.0 * va - vb).abs() < 1e-6 * vb.max(1.0));
        }
    }

    #[test]
    fn quadratic_gives_constant_laplacian() {
        // gray = x² / 100 has Laplacian 0.02 everywhere away from the border.
        let m = log_magnitude(&gray_image(40, 40, |x, _| (x * x) as f32 / 100.0), 1.6);
        for x in 10..30 {
            assert!((m.at(x, 20) - 0.02).abs() < 1e-5, "{}", m.at(x, 20));
        }
    }
}
