//! Steered Mixture-of-Experts (SMoE) regression for block-based image
//! denoising.
//!
//! A block is modelled as a softmax-gated blend of constant experts, each
//! gate driven by a steered Gaussian kernel. [`fit_block`] estimates one
//! model per block by gradient descent; the [`pipeline`] module fuses many
//! overlapping or block-matched models into a denoised image.
//!
//! ```
//! use smoe_core::{denoise, GrayImage, PipelineConfig};
//!
//! let img = GrayImage::from_fn(16, 16, |r, c| if r + c < 16 { 0.2 } else { 0.8 }).unwrap();
//! let cfg = PipelineConfig { stride: 8, ..PipelineConfig::default() };
//! let out = denoise(&img, &cfg).unwrap();
//! assert_eq!((out.width(), out.height()), (16, 16));
//! ```

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod demo1d;
pub mod error;
pub mod fit;
pub mod fusion;
pub mod harness;
pub mod image;
pub mod io;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod pipeline;

pub use error::{Result, SmoeError};
pub use fit::{fit_block, fit_from, init_model, FitConfig, FitReport};
pub use fusion::{
    average_parameters, average_predictions, reliability_weights, FusionWeights, GatingMass,
};
pub use harness::{BenchmarkJob, MetricsRow};
pub use image::GrayImage;
pub use io::{load_image, model_to_text, save_image};
pub use metrics::{psnr, ssim};
pub use model::{BlockData, KernelParams, SmoeModel, SmoeModel1, SmoeModel2};
pub use noise::{add_gaussian, add_noise, add_speckle, NoiseKind, NoiseSpec};
pub use pipeline::{
    block_match, bm_smoe_denoise, denoise, s_smoe_denoise, BlockMatchConfig, Mode, PipelineConfig,
    Weighting,
};
