//! Multi-model inference: fusing several fitted models either by averaging
//! their parameters (aligned content) or by a weighted average of their
//! predictions (non-aligned content), with reliability weights derived from
//! per-kernel gating mass.

use ndarray::Array2;

use crate::error::{Result, SmoeError};
use crate::model::{BlockData, SmoeModel};

/// Masses below this are treated as this value when inverted.
const MASS_FLOOR: f64 = 1e-12;

/// Convex weights `Δ^h` over `H` models.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    pub fn uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(SmoeError::invalid("at least one weight is required"));
        }
        Ok(FusionWeights(vec![1.0 / count as f64; count]))
    }

    /// Normalizes non-negative raw weights to sum to one.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(SmoeError::invalid("at least one weight is required"));
        }
        if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SmoeError::invalid(
                "weights must be finite and non-negative",
            ));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(SmoeError::invalid("weights must not all be zero"));
        }
        Ok(FusionWeights(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-kernel gating mass `M_j = Σ_m w_j(x_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingMass(pub Vec<f64>);

impl GatingMass {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `1 / mean_j(1 / M_j)`: the harmonic mean of the masses, proportional
    /// to the mean per-kernel precision of the expert estimates.
    pub fn harmonic_mean(&self) -> f64 {
        let inv: f64 = self.0.iter().map(|m| 1.0 / m.max(MASS_FLOOR)).sum();
        self.0.len() as f64 / inv
    }
}

pub fn gating_mass<const N: usize>(model: &SmoeModel<N>, block: &BlockData<N>) -> GatingMass {
    let mut mass = vec![0.0; model.num_kernels()];
    let mut w = vec![0.0; model.num_kernels()];
    for x in block.coords() {
        model.gating_into(x, &mut w);
        for (m, w) in mass.iter_mut().zip(&w) {
            *m += w;
        }
    }
    GatingMass(mass)
}

/// Greedy nearest-center correspondence: `result[j]` is the kernel of
/// `model` paired with kernel `j` of `anchor`. Anchor kernels are processed
/// in order; each takes the closest still-unassigned kernel, ties going to
/// the lower index.
pub fn match_kernels<const N: usize>(
    anchor: &SmoeModel<N>,
    model: &SmoeModel<N>,
) -> Result<Vec<usize>> {
    if anchor.num_kernels() != model.num_kernels() {
        return Err(SmoeError::invalid(format!(
            "cannot match {} kernels against {}",
            model.num_kernels(),
            anchor.num_kernels()
        )));
    }
    let mut taken = vec![false; model.num_kernels()];
    let mut out = Vec::with_capacity(anchor.num_kernels());
    for a in anchor.kernels() {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, k) in model.kernels().iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d: f64 = a
                .center
                .iter()
                .zip(&k.center)
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            if best.is_none() || d < best_d {
                best = Some(i);
                best_d = d;
            }
        }
        let i = best.expect("an unassigned kernel remains");
        taken[i] = true;
        out.push(i);
    }
    Ok(out)
}

/// Reorders the kernels of `model` to follow `anchor` (see [`match_kernels`]).
pub fn align_to<const N: usize>(
    anchor: &SmoeModel<N>,
    model: &SmoeModel<N>,
) -> Result<SmoeModel<N>> {
    let order = match_kernels(anchor, model)?;
    SmoeModel::new(order.into_iter().map(|i| model.kernels()[i]).collect())
}

/// Averages the unconstrained parameters of aligned models, after putting
/// every model's kernels in correspondence with the first model.
pub fn average_parameters<const N: usize>(models: &[SmoeModel<N>]) -> Result<SmoeModel<N>> {
    let anchor = models
        .first()
        .ok_or_else(|| SmoeError::invalid("at least one model is required"))?;
    let mut sum = vec![0.0; anchor.param_count()];
    for model in models {
        let aligned = align_to(anchor, model)?;
        for (s, v) in sum.iter_mut().zip(aligned.to_flat()) {
            *s += v;
        }
    }
    let h = models.len() as f64;
    sum.iter_mut().for_each(|s| *s /= h);
    SmoeModel::from_flat(&sum)
}

/// Element-wise `Σ_h Δ^h · P^h` over equally shaped prediction matrices.
pub fn average_predictions(
    predictions: &[Array2<f64>],
    weights: &FusionWeights,
) -> Result<Array2<f64>> {
    let first = predictions
        .first()
        .ok_or_else(|| SmoeError::invalid("at least one prediction is required"))?;
    if predictions.len() != weights.len() {
        return Err(SmoeError::invalid(format!(
            "{} predictions but {} weights",
            predictions.len(),
            weights.len()
        )));
    }
    let mut out = Array2::zeros(first.raw_dim());
    for (p, &w) in predictions.iter().zip(weights.as_slice()) {
        if p.dim() != first.dim() {
            return Err(SmoeError::invalid(format!(
                "prediction shape {:?} differs from {:?}",
                p.dim(),
                first.dim()
            )));
        }
        out.scaled_add(w, p);
    }
    Ok(out)
}

/// Weights from per-model gating masses: `r_h = 1 / mean_j(σ² / M_j^h)`,
/// `Δ^h = r_h / Σ r`. A zero noise variance gives uniform weights.
pub fn weights_from_masses(masses: &[GatingMass], noise_var: f64) -> Result<FusionWeights> {
    if !(noise_var >= 0.0) {
        return Err(SmoeError::invalid("noise variance must be non-negative"));
    }
    if noise_var == 0.0 {
        return FusionWeights::uniform(masses.len());
    }
    let raw = masses
        .iter()
        .map(|m| {
            let mean_var =
                m.0.iter()
                    .map(|mj| noise_var / mj.max(MASS_FLOOR))
                    .sum::<f64>()
                    / m.0.len() as f64;
            1.0 / mean_var
        })
        .collect();
    FusionWeights::normalized(raw)
}

/// Reliability weights for models fitted on the paired blocks.
pub fn reliability_weights<const N: usize>(
    models: &[SmoeModel<N>],
    blocks: &[BlockData<N>],
    noise_var: f64,
) -> Result<FusionWeights> {
    if models.len() != blocks.len() {
        return Err(SmoeError::invalid(format!(
            "{} models but {} blocks",
            models.len(),
            blocks.len()
        )));
    }
    let masses: Vec<GatingMass> = models
        .iter()
        .zip(blocks)
        .map(|(m, b)| gating_mass(m, b))
        .collect();
    weights_from_masses(&masses, noise_var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelParams;
    use ndarray::array;

    fn model(experts: &[f64]) -> SmoeModel<2> {
        let n = experts.len();
        SmoeModel::new(
            experts
                .iter()
                .enumerate()
                .map(|(j, &e)| {
                    KernelParams::isotropic([0.2 + 0.6 * j as f64 / n as f64, 0.5], 9.0, e)
                })
                .collect(),
        )
        .unwrap()
    }

    fn block() -> BlockData<2> {
        BlockData::regular((0..64).map(|i| i as f64 / 63.0).collect(), (0, 0), 8).unwrap()
    }

    #[test]
    fn single_kernel_mass_is_sample_count() {
        let m = model(&[0.3]);
        assert_eq!(gating_mass(&m, &block()).0, vec![64.0]);
    }

    #[test]
    fn identical_kernels_share_mass() {
        let k = KernelParams::isotropic([0.3, 0.7], 5.0, 0.1);
        let m = SmoeModel::new(vec![k, k]).unwrap();
        assert_eq!(gating_mass(&m, &block()).0, vec![32.0, 32.0]);
    }

    #[test]
    fn averaging_copies_is_identity() {
        let m = model(&[0.1, 0.5, 0.9]);
        let avg = average_parameters(&[m.clone(), m.clone(), m.clone()]).unwrap();
        for (a, b) in avg.to_flat().iter().zip(m.to_flat()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn averaging_experts() {
        let avg = average_parameters(&[model(&[0.2, 0.4]), model(&[0.6, 1.0])]).unwrap();
        assert!((avg.kernels()[0].expert - 0.4).abs() < 1e-15);
        assert!((avg.kernels()[1].expert - 0.7).abs() < 1e-15);
    }

    #[test]
    fn averaging_matches_permuted_kernels() {
        let a = model(&[0.2, 0.4, 0.6]);
        let mut ks = a.kernels().to_vec();
        ks.reverse();
        let b = SmoeModel::new(ks).unwrap();
        assert_eq!(match_kernels(&a, &b).unwrap(), vec![2, 1, 0]);
        let avg = average_parameters(&[a.clone(), b]).unwrap();
        assert_eq!(avg, a);
    }

    #[test]
    fn mismatched_kernel_counts_rejected() {
        assert!(average_parameters(&[model(&[0.1, 0.2]), model(&[0.1])]).is_err());
        assert!(average_parameters::<2>(&[]).is_err());
    }

    #[test]
    fn prediction_averaging() {
        let a = array![[0.0, 1.0], [2.0, 3.0]];
        let b = array![[1.0, 1.0], [0.0, 5.0]];
        let w = FusionWeights::uniform(2).unwrap();
        let avg = average_predictions(&[a.clone(), b], &w).unwrap();
        assert_eq!(avg, array![[0.5, 1.0], [1.0, 4.0]]);
        let one = average_predictions(
            std::slice::from_ref(&a),
            &FusionWeights::uniform(1).unwrap(),
        )
        .unwrap();
        assert_eq!(one, a);
    }

    #[test]
    fn prediction_shape_errors() {
        let a = array![[0.0, 1.0]];
        let b = array![[0.0], [1.0]];
        let w = FusionWeights::uniform(2).unwrap();
        assert!(average_predictions(&[a.clone(), b], &w).is_err());
        assert!(average_predictions(&[a], &w).is_err());
    }

    #[test]
    fn reliability_proportional_to_mass() {
        let m1 = GatingMass(vec![20.0, 40.0, 4.0]);
        let m2 = GatingMass(vec![10.0, 20.0, 2.0]);
        let w = weights_from_masses(&[m1.clone(), m2.clone()], 0.01).unwrap();
        assert!((w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w.as_slice()[1] - 1.0 / 3.0).abs() < 1e-12);
        let w = weights_from_masses(&[m1.clone(), m1.clone(), m1], 0.01).unwrap();
        assert!(w.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let w = weights_from_masses(&[GatingMass(vec![1.0]), m2], 0.0).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn reliability_pairs_must_align() {
        let m = model(&[0.1]);
        assert!(reliability_weights(&[m.clone(), m], &[block()], 0.01).is_err());
    }

    #[test]
    fn weights_validate() {
        assert!(FusionWeights::normalized(vec![]).is_err());
        assert!(FusionWeights::normalized(vec![0.0, 0.0]).is_err());
        assert!(FusionWeights::normalized(vec![1.0, -1.0]).is_err());
        let w = FusionWeights::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
    }
}
