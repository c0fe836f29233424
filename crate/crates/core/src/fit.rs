//! Per-block model fitting: grid initialization, mean-squared-error loss,
//! analytic gradients and full-batch gradient descent with adaptive moment
//! estimates.

use crate::error::{Result, SmoeError};
use crate::model::{pixel_coord, BlockData, KernelParams, SmoeModel, LOG_DIAG_MAX, LOG_DIAG_MIN};

/// Settings for [`fit_block`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub num_kernels: usize,
    pub max_iters: usize,
    pub step_size: f64,
    /// Decay rates of the first and second gradient-moment estimates.
    pub moment_decays: (f64, f64),
    /// Stop once the gradient ∞-norm falls below this value.
    pub grad_tolerance: f64,
    /// Optimize the mixing logits jointly with the rest of the parameters.
    /// When false the logits keep their initial (uniform) values.
    pub fit_mixing: bool,
    /// Fitting is full-batch and uses no randomness; the seed is kept so
    /// that configurations remain reproducible if sampling is ever added.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_kernels: 4,
            max_iters: 400,
            step_size: 0.05,
            moment_decays: (0.9, 0.999),
            grad_tolerance: 1e-6,
            fit_mixing: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Defaults for the 1D demonstrator (three kernels).
    pub fn one_dimensional() -> Self {
        FitConfig {
            num_kernels: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_kernels < 1 {
            return Err(SmoeError::invalid("num_kernels must be at least 1"));
        }
        if self.max_iters < 1 {
            return Err(SmoeError::invalid("max_iters must be at least 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(SmoeError::invalid("step_size must be positive"));
        }
        let (b1, b2) = self.moment_decays;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || b1 == 0.0 || b2 == 0.0 {
            return Err(SmoeError::invalid("moment decays must lie in (0, 1)"));
        }
        if !(self.grad_tolerance >= 0.0) {
            return Err(SmoeError::invalid("grad_tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub final_loss: f64,
    pub iters_used: usize,
    /// Gradient ∞-norm at the returned parameters.
    pub grad_norm: f64,
}

const ADAM_EPSILON: f64 = 1e-8;

/// Initial model for a block.
///
/// Centers sit on the midpoints of a `g × g` grid with `g = ⌈√L⌉` (cells
/// taken in scan order, surplus cells skipped) or, in 1D, on `L` equispaced
/// midpoints. Each expert starts at the mean of the samples nearest to its
/// center, kernels are round with bandwidth `1/(2√L)` and logits are zero.
pub fn init_model<const N: usize>(
    block: &BlockData<N>,
    num_kernels: usize,
) -> Result<SmoeModel<N>> {
    if num_kernels < 1 {
        return Err(SmoeError::invalid("number of kernels must be at least 1"));
    }
    let centers = grid_centers::<N>(num_kernels);
    let mut sums = vec![0.0; num_kernels];
    let mut counts = vec![0usize; num_kernels];
    for (x, &y) in block.coords().iter().zip(block.values()) {
        let j = nearest(&centers, x);
        sums[j] += y;
        counts[j] += 1;
    }
    let block_mean = block.mean();
    let precision = 4.0 * num_kernels as f64;
    let kernels = centers
        .into_iter()
        .zip(sums.iter().zip(&counts))
        .map(|(c, (&s, &n))| {
            let expert = if n > 0 { s / n as f64 } else { block_mean };
            KernelParams::isotropic(c, precision, expert)
        })
        .collect();
    SmoeModel::new(kernels)
}

fn grid_centers<const N: usize>(num_kernels: usize) -> Vec<[f64; N]> {
    if N == 1 {
        return (0..num_kernels)
            .map(|j| {
                let mut c = [0.0; N];
                c[0] = pixel_coord(j, num_kernels);
                c
            })
            .collect();
    }
    let mut side = (num_kernels as f64).sqrt().round() as usize;
    while side * side < num_kernels {
        side += 1;
    }
    (0..num_kernels)
        .map(|j| {
            let mut c = [0.0; N];
            c[0] = pixel_coord(j / side, side);
            c[1] = pixel_coord(j % side, side);
            c
        })
        .collect()
}

fn nearest<const N: usize>(centers: &[[f64; N]], x: &[f64; N]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Mean squared error `(1/M) Σ_m (f(x_m) − y_m)²`.
pub fn loss_mse<const N: usize>(model: &SmoeModel<N>, block: &BlockData<N>) -> f64 {
    let mut w = vec![0.0; model.num_kernels()];
    let sum: f64 = block
        .coords()
        .iter()
        .zip(block.values())
        .map(|(x, y)| {
            let r = model.predict_with(x, &mut w) - y;
            r * r
        })
        .sum();
    sum / block.len() as f64
}

/// Analytic gradient of [`loss_mse`] with respect to the flat parameter
/// vector of [`SmoeModel::to_flat`].
pub fn grad_loss<const N: usize>(model: &SmoeModel<N>, block: &BlockData<N>) -> Vec<f64> {
    let mut grad = vec![0.0; model.param_count()];
    let mut scratch = Scratch::new(model.num_kernels());
    loss_and_grad(model, block, &mut grad, &mut scratch);
    grad
}

struct Scratch<const N: usize> {
    factors: Vec<[[f64; N]; N]>,
    d: Vec<[f64; N]>,
    u: Vec<[f64; N]>,
    w: Vec<f64>,
}

impl<const N: usize> Scratch<N> {
    fn new(l: usize) -> Self {
        Scratch {
            factors: vec![[[0.0; N]; N]; l],
            d: vec![[0.0; N]; l],
            u: vec![[0.0; N]; l],
            w: vec![0.0; l],
        }
    }
}

/// Loss and gradient in a single pass over the samples. `grad` is
/// overwritten.
///
/// With `z_j = logit_j − q_j`, `q_j = |Rⱼᵀ dⱼ|²`, `dⱼ = x − c_j` and
/// `w = softmax(z)`, the per-sample derivatives are `∂f/∂m_j = w_j`,
/// `∂f/∂z_j = w_j (m_j − f)`, `∂q/∂c = −2 R u`, `∂q/∂R_ik = 2 u_k d_i`,
/// and `∂q/∂ln R_kk = 2 u_k d_k R_kk`.
fn loss_and_grad<const N: usize>(
    model: &SmoeModel<N>,
    block: &BlockData<N>,
    grad: &mut [f64],
    s: &mut Scratch<N>,
) -> f64 {
    let kernels = model.kernels();
    let per = KernelParams::<N>::PARAM_COUNT;
    for (f, k) in s.factors.iter_mut().zip(kernels) {
        *f = k.factor();
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 2.0 / block.len() as f64;
    let mut loss = 0.0;

    for (x, &y) in block.coords().iter().zip(block.values()) {
        let mut zmax = f64::NEG_INFINITY;
        for j in 0..kernels.len() {
            let r = &s.factors[j];
            let c = &kernels[j].center;
            let mut d = [0.0; N];
            for i in 0..N {
                d[i] = x[i] - c[i];
            }
            let mut u = [0.0; N];
            let mut q = 0.0;
            for k in 0..N {
                let mut acc = 0.0;
                for i in k..N {
                    acc += r[i][k] * d[i];
                }
                u[k] = acc;
                q += acc * acc;
            }
            s.d[j] = d;
            s.u[j] = u;
            let z = kernels[j].mix_logit - q;
            s.w[j] = z;
            zmax = zmax.max(z);
        }
        let mut total = 0.0;
        for w in s.w.iter_mut() {
            *w = (*w - zmax).exp();
            total += *w;
        }
        let mut f = 0.0;
        for (w, k) in s.w.iter_mut().zip(kernels) {
            *w /= total;
            f += *w * k.expert;
        }
        let resid = f - y;
        loss += resid * resid;

        let g = scale * resid;
        for j in 0..kernels.len() {
            let w = s.w[j];
            let dz = g * w * (kernels[j].expert - f);
            let r = &s.factors[j];
            let d = &s.d[j];
            let u = &s.u[j];
            let out = &mut grad[j * per..(j + 1) * per];
            // center: dL/dc_i = 2 dz (R u)_i
            for i in 0..N {
                let mut ru = 0.0;
                for k in 0..=i {
                    ru += r[i][k] * u[k];
                }
                out[i] += 2.0 * dz * ru;
            }
            // factor: dL/dq = -dz
            let mut pos = N;
            for i in 0..N {
                for k in 0..i {
                    out[pos] -= 2.0 * dz * u[k] * d[i];
                    pos += 1;
                }
                out[pos] -= 2.0 * dz * u[i] * d[i] * r[i][i];
                pos += 1;
            }
            out[pos] += dz;
            out[pos + 1] += g * w;
        }
    }
    loss / block.len() as f64
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Fits a model to one block by full-batch gradient descent on the MSE.
///
/// Each step scales the gradient per parameter by bias-corrected running
/// first/second moment estimates, then re-clamps the precision
/// log-diagonals. The best iterate seen is returned, so the result never has
/// higher loss than the initialization.
pub fn fit_block<const N: usize>(
    block: &BlockData<N>,
    cfg: &FitConfig,
) -> Result<(SmoeModel<N>, FitReport)> {
    cfg.validate()?;
    let init = init_model(block, cfg.num_kernels)?;
    Ok(fit_from(init, block, cfg))
}

/// As [`fit_block`] but starting from a caller-supplied model.
pub fn fit_from<const N: usize>(
    init: SmoeModel<N>,
    block: &BlockData<N>,
    cfg: &FitConfig,
) -> (SmoeModel<N>, FitReport) {
    let n = init.param_count();
    let mut model = init;
    model.clamp_log_diag();
    let mut theta = model.to_flat();
    let mut grad = vec![0.0; n];
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut scratch = Scratch::new(model.num_kernels());
    let (b1, b2) = cfg.moment_decays;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    let per = KernelParams::<N>::PARAM_COUNT;
    let diag_slots: Vec<usize> = (0..model.num_kernels())
        .flat_map(|j| (0..N).map(move |i| j * per + N + i * (i + 1) / 2 + i))
        .collect();
    let logit_slots: Vec<usize> = (0..model.num_kernels())
        .map(|j| (j + 1) * per - 2)
        .collect();

    let mut best_theta = theta.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_grad_norm = f64::INFINITY;
    let mut iters = 0;

    loop {
        let loss = loss_and_grad(&model, block, &mut grad, &mut scratch);
        if !cfg.fit_mixing {
            for &p in &logit_slots {
                grad[p] = 0.0;
            }
        }
        let gnorm = inf_norm(&grad);
        if loss < best_loss {
            best_loss = loss;
            best_grad_norm = gnorm;
            best_theta.copy_from_slice(&theta);
        }
        if iters >= cfg.max_iters || gnorm < cfg.grad_tolerance || !loss.is_finite() {
            break;
        }
        iters += 1;
        b1t *= b1;
        b2t *= b2;
        for i in 0..n {
            m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
            let mhat = m1[i] / (1.0 - b1t);
            let vhat = m2[i] / (1.0 - b2t);
            theta[i] -= cfg.step_size * mhat / (vhat.sqrt() + ADAM_EPSILON);
        }
        for &p in &diag_slots {
            theta[p] = theta[p].clamp(LOG_DIAG_MIN, LOG_DIAG_MAX);
        }
        model.set_flat(&theta);
    }

    model.set_flat(&best_theta);
    (
        model,
        FitReport {
            final_loss: best_loss,
            iters_used: iters,
            grad_norm: best_grad_norm,
        },
    )
}
