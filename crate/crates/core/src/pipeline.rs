//! Whole-image denoising by multi-model inference over image blocks.
//!
//! * S-SMoE slides a `B × B` window with stride `s`, fits one model per
//!   window and averages all predictions that land on a pixel.
//! * BM-SMoE groups each reference block with its best block-matching
//!   candidates, fits one model per group member and aggregates every
//!   member prediction at its own position.
//!
//! Block fits run on the rayon pool. Predictions are merged into the
//! accumulator in a fixed order afterwards, so the output does not depend on
//! the number of threads.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Result, SmoeError};
use crate::fit::{fit_block, FitConfig};
use crate::fusion::gating_mass;
use crate::image::{GrayImage, PixelAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SSmoe,
    BmSmoe,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SSmoe => "s-smoe",
            Mode::BmSmoe => "bm-smoe",
        }
    }
}

impl FromStr for Mode {
    type Err = SmoeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "s-smoe" => Ok(Mode::SSmoe),
            "bm-smoe" => Ok(Mode::BmSmoe),
            other => Err(SmoeError::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// How overlapping predictions are weighted in the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Uniform,
    /// Weight each block by `1 / mean_j(σ² / M_j)` from its gating masses.
    Reliability,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::Reliability => "reliability",
        }
    }
}

impl FromStr for Weighting {
    type Err = SmoeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Weighting::Uniform),
            "reliability" => Ok(Weighting::Reliability),
            other => Err(SmoeError::invalid(format!("unknown weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMatchConfig {
    /// Step between reference blocks.
    pub ref_stride: usize,
    /// Candidates lie within `±search_radius` of the reference origin.
    pub search_radius: usize,
    pub max_group: usize,
}

impl Default for BlockMatchConfig {
    fn default() -> Self {
        BlockMatchConfig {
            ref_stride: 3,
            search_radius: 19,
            max_group: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub block_size: usize,
    pub stride: usize,
    pub fit: FitConfig,
    pub mode: Mode,
    pub bm: BlockMatchConfig,
    pub weighting: Weighting,
    /// Noise variance, required for reliability weighting.
    pub noise_var: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            block_size: 8,
            stride: 1,
            fit: FitConfig::default(),
            mode: Mode::SSmoe,
            bm: BlockMatchConfig::default(),
            weighting: Weighting::Uniform,
            noise_var: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, img: &GrayImage) -> Result<()> {
        self.fit.validate()?;
        let b = self.block_size;
        if b == 0 || b > img.width().min(img.height()) {
            return Err(SmoeError::invalid(format!(
                "block size {b} must be in 1..={}",
                img.width().min(img.height())
            )));
        }
        if self.stride == 0 || self.stride > b {
            return Err(SmoeError::invalid(format!(
                "stride {} must be in 1..={b}",
                self.stride
            )));
        }
        if self.bm.max_group == 0 {
            return Err(SmoeError::invalid("max_group must be at least 1"));
        }
        if self.bm.ref_stride == 0 {
            return Err(SmoeError::invalid("ref_stride must be at least 1"));
        }
        match (self.weighting, self.noise_var) {
            (Weighting::Reliability, None) => Err(SmoeError::invalid(
                "reliability weighting requires a noise variance",
            )),
            (_, Some(v)) if !(v >= 0.0 && v.is_finite()) => Err(SmoeError::invalid(format!(
                "noise variance {v} must be finite and >= 0"
            ))),
            _ => Ok(()),
        }
    }

    /// Models per interior pixel for S-SMoE, `(B/s)²`, when `s` divides `B`.
    pub fn models_per_pixel(&self) -> Option<usize> {
        self.block_size
            .is_multiple_of(self.stride)
            .then(|| (self.block_size / self.stride).pow(2))
    }
}

/// Window positions `0, s, 2s, …` along an axis of `len` pixels, plus a
/// final edge-flushed position `len − size` when the stride does not land
/// on it.
pub fn axis_origins(len: usize, size: usize, stride: usize) -> Vec<usize> {
    assert!(size <= len && stride >= 1);
    let last = len - size;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().expect("at least origin 0") != last {
        out.push(last);
    }
    out
}

/// Block origins `(row, col)` in scan order covering every pixel.
pub fn block_origins(
    width: usize,
    height: usize,
    size: usize,
    stride: usize,
) -> Vec<(usize, usize)> {
    let rows = axis_origins(height, size, stride);
    let cols = axis_origins(width, size, stride);
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect()
}

pub fn extract_blocks(
    img: &GrayImage,
    size: usize,
    stride: usize,
) -> Result<Vec<crate::model::BlockData<2>>> {
    if size == 0 || size > img.width().min(img.height()) || stride == 0 {
        return Err(SmoeError::invalid("block size or stride out of range"));
    }
    block_origins(img.width(), img.height(), size, stride)
        .into_iter()
        .map(|o| img.block(o, size))
        .collect()
}

/// Fitted and predicted block with its accumulation weight.
struct BlockEstimate {
    values: Vec<f64>,
    weight: f64,
}

fn estimate_block(
    img: &GrayImage,
    origin: (usize, usize),
    cfg: &PipelineConfig,
) -> Result<BlockEstimate> {
    let block = img.block(origin, cfg.block_size)?;
    let (model, _) = fit_block(&block, &cfg.fit)?;
    let weight = match (cfg.weighting, cfg.noise_var) {
        (Weighting::Reliability, Some(var)) if var > 0.0 => {
            let mass = gating_mass(&model, &block);
            let mean_var =
                mass.0.iter().map(|m| var / m.max(1e-12)).sum::<f64>() / mass.0.len() as f64;
            1.0 / mean_var
        }
        _ => 1.0,
    };
    Ok(BlockEstimate {
        values: model
            .predict_block(cfg.block_size)
            .into_raw_vec_and_offset()
            .0,
        weight,
    })
}

/// Sliding-window multi-model denoising.
pub fn s_smoe_denoise(img: &GrayImage, cfg: &PipelineConfig) -> Result<GrayImage> {
    cfg.validate(img)?;
    let origins = block_origins(img.width(), img.height(), cfg.block_size, cfg.stride);
    let estimates: Vec<BlockEstimate> = origins
        .par_iter()
        .map(|&o| estimate_block(img, o, cfg))
        .collect::<Result<_>>()?;
    let mut acc = PixelAccumulator::new(img.width(), img.height());
    let b = cfg.block_size;
    for (o, e) in origins.iter().zip(&estimates) {
        acc.add_patch(*o, b, b, &e.values, e.weight);
    }
    acc.finalize()
}

fn block_distance(img: &GrayImage, a: (usize, usize), b: (usize, usize), size: usize) -> f64 {
    let w = img.width();
    let px = img.pixels();
    let mut sum = 0.0;
    for r in 0..size {
        let ra = &px[(a.0 + r) * w + a.1..(a.0 + r) * w + a.1 + size];
        let rb = &px[(b.0 + r) * w + b.1..(b.0 + r) * w + b.1 + size];
        for (x, y) in ra.iter().zip(rb) {
            sum += (x - y) * (x - y);
        }
    }
    sum / (size * size) as f64
}

/// Origins of the blocks most similar to the reference block.
///
/// Scans every in-bounds origin within `±search_radius` of `reference`,
/// ranks by mean squared pixel difference (ties in scan order) and keeps
/// the first `max_group`. The reference itself always comes first.
pub fn block_match(
    img: &GrayImage,
    reference: (usize, usize),
    cfg: &BlockMatchConfig,
    size: usize,
) -> Result<Vec<(usize, usize)>> {
    if size == 0 || reference.0 + size > img.height() || reference.1 + size > img.width() {
        return Err(SmoeError::invalid(format!(
            "reference block at {reference:?} of size {size} is outside the image"
        )));
    }
    if cfg.max_group == 0 {
        return Err(SmoeError::invalid("max_group must be at least 1"));
    }
    let rad = cfg.search_radius;
    let r_lo = reference.0.saturating_sub(rad);
    let r_hi = (reference.0 + rad).min(img.height() - size);
    let c_lo = reference.1.saturating_sub(rad);
    let c_hi = (reference.1 + rad).min(img.width() - size);

    let mut candidates: Vec<(f64, (usize, usize))> = Vec::new();
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            if (r, c) != reference {
                candidates.push((block_distance(img, reference, (r, c), size), (r, c)));
            }
        }
    }
    // Stable sort keeps scan order among equal distances.
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut group = Vec::with_capacity(cfg.max_group);
    group.push(reference);
    group.extend(
        candidates
            .into_iter()
            .take(cfg.max_group - 1)
            .map(|(_, o)| o),
    );
    Ok(group)
}

/// Non-local multi-model denoising over block-matched groups.
///
/// Reference blocks sit on a `ref_stride` grid (edge-flushed). A block that
/// appears in several groups contributes once per group. Each distinct
/// origin is fitted only once, which gives the same result as refitting
/// because fitting is deterministic.
pub fn bm_smoe_denoise(img: &GrayImage, cfg: &PipelineConfig) -> Result<GrayImage> {
    cfg.validate(img)?;
    let b = cfg.block_size;
    let refs = block_origins(img.width(), img.height(), b, cfg.bm.ref_stride);
    let groups: Vec<Vec<(usize, usize)>> = refs
        .par_iter()
        .map(|&r| block_match(img, r, &cfg.bm, b))
        .collect::<Result<_>>()?;

    let unique: Vec<(usize, usize)> = {
        let mut all: Vec<_> = groups.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let estimates: Vec<BlockEstimate> = unique
        .par_iter()
        .map(|&o| estimate_block(img, o, cfg))
        .collect::<Result<_>>()?;
    let by_origin: BTreeMap<(usize, usize), &BlockEstimate> =
        unique.iter().copied().zip(&estimates).collect();

    let mut acc = PixelAccumulator::new(img.width(), img.height());
    for group in &groups {
        for o in group {
            let e = by_origin[o];
            acc.add_patch(*o, b, b, &e.values, e.weight);
        }
    }
    acc.finalize()
}

/// Runs the pipeline selected by `cfg.mode`.
pub fn denoise(img: &GrayImage, cfg: &PipelineConfig) -> Result<GrayImage> {
    match cfg.mode {
        Mode::SSmoe => s_smoe_denoise(img, cfg),
        Mode::BmSmoe => bm_smoe_denoise(img, cfg),
    }
}
