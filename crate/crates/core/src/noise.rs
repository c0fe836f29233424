//! Seeded additive Gaussian and multiplicative speckle noise.
//!
//! Noise is drawn from a ChaCha8 stream, so the output is a pure function of
//! the image and the [`NoiseSpec`] on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SmoeError};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Gaussian,
    Speckle,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Speckle => "speckle",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = SmoeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "speckle" => Ok(NoiseKind::Speckle),
            other => Err(SmoeError::invalid(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(SmoeError::invalid(format!(
                "noise variance {variance} must be finite and >= 0"
            )));
        }
        Ok(NoiseSpec {
            kind,
            variance,
            seed,
        })
    }

    pub fn gaussian(variance: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, variance, seed)
    }

    pub fn speckle(variance: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::Speckle, variance, seed)
    }
}

/// Random generator for `(seed, stream)`; distinct streams are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` independent standard normal deviates.
pub fn standard_normals(rng: &mut impl Rng, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Noisy intensities before clamping: `y + ε` (Gaussian) or `y + y·ε`
/// (speckle), with `ε ~ N(0, variance)`.
pub fn perturb(img: &GrayImage, spec: &NoiseSpec) -> Vec<f64> {
    if spec.variance == 0.0 {
        return img.pixels().to_vec();
    }
    let sd = spec.variance.sqrt();
    let mut rng = stream_rng(spec.seed, 0);
    img.pixels()
        .iter()
        .map(|&y| {
            let eps = sd * rng.sample::<f64, _>(StandardNormal);
            match spec.kind {
                NoiseKind::Gaussian => y + eps,
                NoiseKind::Speckle => y + y * eps,
            }
        })
        .collect()
}

fn apply(img: &GrayImage, spec: &NoiseSpec, expected: NoiseKind) -> Result<GrayImage> {
    if spec.kind != expected {
        return Err(SmoeError::invalid(format!(
            "expected {} noise, got {}",
            expected.as_str(),
            spec.kind.as_str()
        )));
    }
    add_noise(img, spec)
}

pub fn add_gaussian(img: &GrayImage, spec: &NoiseSpec) -> Result<GrayImage> {
    apply(img, spec, NoiseKind::Gaussian)
}

pub fn add_speckle(img: &GrayImage, spec: &NoiseSpec) -> Result<GrayImage> {
    apply(img, spec, NoiseKind::Speckle)
}

/// Adds noise of either kind and clamps the result to `[0, 1]`.
pub fn add_noise(img: &GrayImage, spec: &NoiseSpec) -> Result<GrayImage> {
    GrayImage::from_clamped(img.width(), img.height(), perturb(img, spec))
}
