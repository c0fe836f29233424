//! Image quality metrics: PSNR (peak 1.0) and Gaussian-window SSIM.

use crate::error::{Result, SmoeError};
use crate::image::GrayImage;

fn check_shape(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(SmoeError::invalid(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

/// `10·log10(1 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// SSIM window and stability constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1D Gaussian taps; the 2D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// Mean SSIM with the standard 11×11 Gaussian window (σ = 1.5).
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// Mean of the local SSIM map over every window position fully inside the
/// image.
pub fn ssim_with(a: &GrayImage, b: &GrayImage, params: &SsimParams) -> Result<f64> {
    check_shape(a, b)?;
    let win = params.window;
    if win == 0 || a.width() < win || a.height() < win {
        return Err(SmoeError::invalid(format!(
            "SSIM needs images of at least {win}x{win}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let taps = params.taps();
    let (w, h) = (a.width(), a.height());
    let pa = a.pixels();
    let pb = b.pixels();
    let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(pa, w, h, &taps);
    let mu_b = filter_valid(pb, w, h, &taps);
    let e_aa = filter_valid(&aa, w, h, &taps);
    let e_bb = filter_valid(&bb, w, h, &taps);
    let e_ab = filter_valid(&ab, w, h, &taps);

    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Separable correlation keeping only fully supported outputs.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&line[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |r, c| ((r * 7 + c * 13) % 17) as f64 / 16.0).unwrap()
    }

    #[test]
    fn psnr_of_identical_is_infinite() {
        let a = ramp(8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_analytic_values() {
        let a = GrayImage::constant(10, 10, 0.5).unwrap();
        let b = GrayImage::constant(10, 10, 0.6).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr_from_mse(0.01), 20.0);
        assert_eq!(psnr_from_mse(0.001), 30.0);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&ramp(8, 8), &ramp(8, 9)).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = ramp(24, 20);
        let b = GrayImage::from_fn(24, 20, |r, c| ((r * 3 + c) % 5) as f64 / 4.0).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    }

    #[test]
    fn ssim_inverted_binary_is_negative() {
        let a = GrayImage::from_fn(16, 16, |r, c| ((r / 2 + c / 3) % 2) as f64).unwrap();
        let inv = GrayImage::from_fn(16, 16, |r, c| 1.0 - a.get(r, c)).unwrap();
        let s = ssim(&a, &inv).unwrap();
        assert!((-1.0..0.0).contains(&s), "{s}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = ramp(10, 12);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn taps_sum_to_one() {
        let t = SsimParams::default().taps();
        assert_eq!(t.len(), 11);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
