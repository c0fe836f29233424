//! Steered mixture-of-experts model: steered Gaussian kernels, soft gating
//! and the gated regression function.
//!
//! Models are generic over the input dimension `N` (1 for scan lines, 2 for
//! image blocks). Inputs live in block-local normalized coordinates, where
//! pixel `i` of an axis of length `B` sits at `(i + 0.5) / B`.

use ndarray::Array2;

use crate::error::{Result, SmoeError};

/// Lower clamp for the log-diagonal of the precision factor, `ln(1e-2)`.
pub const LOG_DIAG_MIN: f64 = -4.605_170_185_988_091;
/// Upper clamp for the log-diagonal of the precision factor, `ln(1e3)`.
pub const LOG_DIAG_MAX: f64 = 6.907_755_278_982_137;

/// Normalized coordinate of pixel `index` along an axis of `len` pixels.
#[inline]
pub fn pixel_coord(index: usize, len: usize) -> f64 {
    (index as f64 + 0.5) / len as f64
}

/// Parameters of a single steered kernel and its constant expert.
///
/// The inverse steering matrix is stored through a lower-triangular factor
/// `R` with `Σ⁻¹ = R·Rᵀ`. Diagonal entries of `precision_factor` hold
/// `ln R_kk`, off-diagonal entries below the diagonal hold `R_ik` directly and
/// entries above the diagonal are ignored (kept at zero). Any finite value of
/// the stored entries yields a symmetric positive definite precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams<const N: usize> {
    pub center: [f64; N],
    pub precision_factor: [[f64; N]; N],
    /// Unnormalized log mixing weight; `π_j` is the softmax over all kernels.
    pub mix_logit: f64,
    pub expert: f64,
}

impl<const N: usize> KernelParams<N> {
    /// Number of unconstrained parameters per kernel: center, lower
    /// triangle of the factor, mixing logit and expert.
    pub const PARAM_COUNT: usize = N + N * (N + 1) / 2 + 2;

    /// Round kernel with precision `precision·I`.
    pub fn isotropic(center: [f64; N], precision: f64, expert: f64) -> Self {
        assert!(precision > 0.0, "precision must be positive");
        let mut precision_factor = [[0.0; N]; N];
        let log_diag = 0.5 * precision.ln();
        for (k, row) in precision_factor.iter_mut().enumerate() {
            row[k] = log_diag;
        }
        KernelParams {
            center,
            precision_factor,
            mix_logit: 0.0,
            expert,
        }
    }

    /// Builds a kernel from an explicit precision matrix `Σ⁻¹` by Cholesky
    /// factorization. Fails if the matrix is not symmetric positive definite.
    pub fn from_precision(
        center: [f64; N],
        precision: [[f64; N]; N],
        mix_logit: f64,
        expert: f64,
    ) -> Result<Self> {
        let mut l = [[0.0; N]; N];
        for i in 0..N {
            for k in 0..=i {
                if (precision[i][k] - precision[k][i]).abs() > 1e-12 * (1.0 + precision[i][k].abs())
                {
                    return Err(SmoeError::invalid("precision matrix is not symmetric"));
                }
                let mut s = precision[i][k];
                for p in 0..k {
                    s -= l[i][p] * l[k][p];
                }
                if i == k {
                    if !(s > 0.0) {
                        return Err(SmoeError::invalid(
                            "precision matrix is not positive definite",
                        ));
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][k] = s / l[k][k];
                }
            }
        }
        let mut precision_factor = [[0.0; N]; N];
        for i in 0..N {
            for k in 0..i {
                precision_factor[i][k] = l[i][k];
            }
            precision_factor[i][i] = l[i][i].ln();
        }
        Ok(KernelParams {
            center,
            precision_factor,
            mix_logit,
            expert,
        })
    }

    /// The factor `R` with its diagonal exponentiated.
    #[inline]
    pub fn factor(&self) -> [[f64; N]; N] {
        let mut r = [[0.0; N]; N];
        for i in 0..N {
            for k in 0..i {
                r[i][k] = self.precision_factor[i][k];
            }
            r[i][i] = self.precision_factor[i][i].exp();
        }
        r
    }

    /// `Σ⁻¹ = R·Rᵀ`.
    pub fn precision_matrix(&self) -> [[f64; N]; N] {
        let r = self.factor();
        let mut p = [[0.0; N]; N];
        for i in 0..N {
            for l in 0..N {
                let mut s = 0.0;
                for k in 0..=i.min(l) {
                    s += r[i][k] * r[l][k];
                }
                p[i][l] = s;
            }
        }
        p
    }

    /// Squared Mahalanobis-style distance `(x−c)ᵀ Σ⁻¹ (x−c)`.
    #[inline]
    pub fn quad_form(&self, x: &[f64; N]) -> f64 {
        quad_form_with(&self.factor(), &self.center, x)
    }

    /// Clamps the stored log-diagonal into `[LOG_DIAG_MIN, LOG_DIAG_MAX]`.
    pub fn clamp_log_diag(&mut self) {
        for k in 0..N {
            let v = &mut self.precision_factor[k][k];
            *v = v.clamp(LOG_DIAG_MIN, LOG_DIAG_MAX);
        }
    }

    /// Appends this kernel's parameters in flat order: center components,
    /// factor entries `(i, k)` for `k ≤ i` in row-major order (diagonal as
    /// logs), mixing logit, expert.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.center);
        for i in 0..N {
            out.extend_from_slice(&self.precision_factor[i][..=i]);
        }
        out.push(self.mix_logit);
        out.push(self.expert);
    }

    /// Inverse of [`KernelParams::write_flat`]. `flat` must hold exactly
    /// `PARAM_COUNT` values.
    pub fn read_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len(), Self::PARAM_COUNT);
        let mut center = [0.0; N];
        center.copy_from_slice(&flat[..N]);
        let mut precision_factor = [[0.0; N]; N];
        let mut pos = N;
        for row in precision_factor.iter_mut().enumerate() {
            let (i, row) = row;
            row[..=i].copy_from_slice(&flat[pos..pos + i + 1]);
            pos += i + 1;
        }
        KernelParams {
            center,
            precision_factor,
            mix_logit: flat[pos],
            expert: flat[pos + 1],
        }
    }
}

/// `|Rᵀ(x−c)|²` for an exponentiated factor `r`.
#[inline]
pub(crate) fn quad_form_with<const N: usize>(r: &[[f64; N]; N], c: &[f64; N], x: &[f64; N]) -> f64 {
    let mut d = [0.0; N];
    for i in 0..N {
        d[i] = x[i] - c[i];
    }
    let mut q = 0.0;
    for k in 0..N {
        let mut u = 0.0;
        for i in k..N {
            u += r[i][k] * d[i];
        }
        q += u * u;
    }
    q
}

/// Steered Gaussian `K(x) = exp(−(x−c)ᵀ Σ⁻¹ (x−c))`.
pub fn eval_kernel<const N: usize>(x: &[f64; N], kernel: &KernelParams<N>) -> f64 {
    (-kernel.quad_form(x)).exp()
}

/// An SMoE regression model with `L ≥ 1` kernels over `N`-dimensional input.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoeModel<const N: usize> {
    kernels: Vec<KernelParams<N>>,
}

pub type SmoeModel1 = SmoeModel<1>;
pub type SmoeModel2 = SmoeModel<2>;

impl<const N: usize> SmoeModel<N> {
    pub fn new(kernels: Vec<KernelParams<N>>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(SmoeError::invalid("a model needs at least one kernel"));
        }
        if N == 0 || N > 2 {
            return Err(SmoeError::invalid(format!("unsupported dimension {N}")));
        }
        Ok(SmoeModel { kernels })
    }

    pub fn kernels(&self) -> &[KernelParams<N>] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [KernelParams<N>] {
        &mut self.kernels
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.len()
    }

    pub const fn dim(&self) -> usize {
        N
    }

    /// Total number of unconstrained parameters.
    pub fn param_count(&self) -> usize {
        self.kernels.len() * KernelParams::<N>::PARAM_COUNT
    }

    /// Mixing weights `π_j`, the softmax of the logits.
    pub fn mixing_weights(&self) -> Vec<f64> {
        let logits: Vec<f64> = self.kernels.iter().map(|k| k.mix_logit).collect();
        softmax(&logits)
    }

    /// Flat parameter vector, kernel by kernel in the order of
    /// [`KernelParams::write_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for k in &self.kernels {
            k.write_flat(&mut out);
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let per = KernelParams::<N>::PARAM_COUNT;
        if flat.is_empty() || !flat.len().is_multiple_of(per) {
            return Err(SmoeError::invalid(format!(
                "flat parameter length {} is not a positive multiple of {per}",
                flat.len()
            )));
        }
        Self::new(
            flat.chunks_exact(per)
                .map(KernelParams::read_flat)
                .collect(),
        )
    }

    /// Overwrites the parameters in place from a flat vector of matching length.
    pub(crate) fn set_flat(&mut self, flat: &[f64]) {
        let per = KernelParams::<N>::PARAM_COUNT;
        for (k, chunk) in self.kernels.iter_mut().zip(flat.chunks_exact(per)) {
            *k = KernelParams::read_flat(chunk);
        }
    }

    pub fn clamp_log_diag(&mut self) {
        for k in &mut self.kernels {
            k.clamp_log_diag();
        }
    }

    /// Writes the gating weights at `x` into `out` (length `L`).
    pub fn gating_into(&self, x: &[f64; N], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.kernels.len());
        for (z, k) in out.iter_mut().zip(&self.kernels) {
            *z = k.mix_logit - k.quad_form(x);
        }
        softmax_in_place(out);
    }

    /// Gating weights `w_j(x) = π_j K_j(x) / Σ_l π_l K_l(x)`.
    pub fn gating_weights(&self, x: &[f64; N]) -> Vec<f64> {
        let mut w = vec![0.0; self.kernels.len()];
        self.gating_into(x, &mut w);
        w
    }

    /// Regression value `Σ_j m_j w_j(x)`.
    pub fn predict(&self, x: &[f64; N]) -> f64 {
        let mut w = vec![0.0; self.kernels.len()];
        self.predict_with(x, &mut w)
    }

    /// As [`SmoeModel::predict`], reusing a caller-provided gating buffer.
    pub(crate) fn predict_with(&self, x: &[f64; N], w: &mut [f64]) -> f64 {
        self.gating_into(x, w);
        w.iter().zip(&self.kernels).map(|(w, k)| w * k.expert).sum()
    }

    /// Predicts every pixel of a block with edge length `size`.
    ///
    /// 2D models give a `size × size` matrix whose element `(r, c)` is the
    /// prediction at `((r+0.5)/size, (c+0.5)/size)`; 1D models give a
    /// `1 × size` row. Values are not clamped.
    pub fn predict_block(&self, size: usize) -> Array2<f64> {
        assert!(size >= 1, "block size must be at least 1");
        let coords = block_coords::<N>(size);
        let mut w = vec![0.0; self.kernels.len()];
        let values: Vec<f64> = coords
            .iter()
            .map(|x| self.predict_with(x, &mut w))
            .collect();
        let rows = if N == 2 { size } else { 1 };
        Array2::from_shape_vec((rows, size), values).expect("shape matches coordinate count")
    }
}

/// Normalized pixel-center coordinates of a block with edge length `size`,
/// row-major (the first component indexes rows).
pub fn block_coords<const N: usize>(size: usize) -> Vec<[f64; N]> {
    let count = size.pow(N as u32);
    (0..count)
        .map(|idx| {
            let mut x = [0.0; N];
            let mut rem = idx;
            for axis in (0..N).rev() {
                x[axis] = pixel_coord(rem % size, size);
                rem /= size;
            }
            x
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// In-place softmax with max subtraction, so the largest term is exactly 1
/// and the denominator never underflows.
#[inline]
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// The `M` sample pairs of one block in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockData<const N: usize> {
    coords: Vec<[f64; N]>,
    values: Vec<f64>,
    /// `(row, col)` of the block's top-left pixel in the source image.
    pub origin: (usize, usize),
    /// Edge length in pixels (sample count for 1D blocks).
    pub size: usize,
}

impl<const N: usize> BlockData<N> {
    pub fn new(
        coords: Vec<[f64; N]>,
        values: Vec<f64>,
        origin: (usize, usize),
        size: usize,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(SmoeError::invalid("a block needs at least one sample"));
        }
        if coords.len() != values.len() {
            return Err(SmoeError::invalid(format!(
                "{} coordinates but {} values",
                coords.len(),
                values.len()
            )));
        }
        Ok(BlockData {
            coords,
            values,
            origin,
            size,
        })
    }

    /// A full regular block of edge `size` with row-major `values`.
    pub fn regular(values: Vec<f64>, origin: (usize, usize), size: usize) -> Result<Self> {
        Self::new(block_coords::<N>(size), values, origin, size)
    }

    pub fn coords(&self) -> &[[f64; N]] {
        &self.coords
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
