//! Shared fixtures for the benchmarks.

use smoe_core::{add_noise, GrayImage, NoiseSpec};

/// Two-region image with a diagonal edge and a mild ramp, plus Gaussian noise.
pub fn noisy_edge(width: usize, height: usize, noise_var: f64) -> GrayImage {
    let clean = GrayImage::from_fn(width, height, |r, c| {
        let base = if 2 * r + c < width + height / 2 {
            0.25
        } else {
            0.7
        };
        base + 0.1 * c as f64 / width as f64
    })
    .expect("values in range");
    add_noise(
        &clean,
        &NoiseSpec::gaussian(noise_var, 1).expect("valid spec"),
    )
    .expect("same shape")
}
