//! One-dimensional small-sample experiment: a known 3-kernel signal is
//! sampled with noise at several block sizes, fitted `H` times under
//! independent noise and fused by parameter averaging.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Result, SmoeError};
use crate::fit::{fit_block, FitConfig};
use crate::fusion::{align_to, average_parameters};
use crate::model::{pixel_coord, BlockData, KernelParams, SmoeModel1};
use crate::noise::{standard_normals, stream_rng};

#[derive(Debug, Clone)]
pub struct Demo1DConfig {
    pub ground_truth: SmoeModel1,
    pub sample_counts: Vec<usize>,
    /// Noise variance for each entry of `sample_counts`.
    pub noise_vars: Vec<f64>,
    /// Models fused per trial.
    pub h: usize,
    pub trials: usize,
    pub seed: u64,
    pub fit: FitConfig,
    /// Evaluation points for the dense output curves.
    pub curve_points: usize,
}

impl Default for Demo1DConfig {
    fn default() -> Self {
        Demo1DConfig {
            ground_truth: default_ground_truth(),
            sample_counts: vec![3000, 32],
            noise_vars: vec![0.15, 0.05],
            h: 10,
            trials: 20,
            seed: 0,
            fit: FitConfig::one_dimensional(),
            curve_points: 1000,
        }
    }
}

/// Three kernels at 0.2 / 0.5 / 0.8 with experts 0.2 / 0.9 / 0.4. The first
/// two share a high precision (sharp 0.2→0.9 step); the third is broad, so
/// the 0.9→0.4 transition is smooth.
pub fn default_ground_truth() -> SmoeModel1 {
    SmoeModel1::new(vec![
        KernelParams::isotropic([0.2], 300.0, 0.2),
        KernelParams::isotropic([0.5], 300.0, 0.9),
        KernelParams::isotropic([0.8], 30.0, 0.4),
    ])
    .expect("non-empty")
}

impl Demo1DConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_counts.len() != self.noise_vars.len() {
            return Err(SmoeError::invalid(
                "sample_counts and noise_vars differ in length",
            ));
        }
        if self.h < 1 || self.trials < 1 {
            return Err(SmoeError::invalid("h and trials must be at least 1"));
        }
        if self.sample_counts.contains(&0) {
            return Err(SmoeError::invalid("sample counts must be positive"));
        }
        if self.noise_vars.iter().any(|v| !(*v >= 0.0)) {
            return Err(SmoeError::invalid("noise variances must be non-negative"));
        }
        if self.curve_points == 0 {
            return Err(SmoeError::invalid("curve_points must be positive"));
        }
        self.fit.validate()
    }
}

/// RMS parameter deviation from the ground truth after greedy kernel
/// matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamError {
    pub center_rmse: f64,
    pub expert_rmse: f64,
    /// Largest absolute center deviation over kernels.
    pub center_max: f64,
}

pub fn param_error(truth: &SmoeModel1, model: &SmoeModel1) -> Result<ParamError> {
    let aligned = align_to(truth, model)?;
    let l = truth.num_kernels() as f64;
    let mut c2 = 0.0;
    let mut e2 = 0.0;
    let mut cmax: f64 = 0.0;
    for (t, k) in truth.kernels().iter().zip(aligned.kernels()) {
        let dc = k.center[0] - t.center[0];
        c2 += dc * dc;
        cmax = cmax.max(dc.abs());
        let de = k.expert - t.expert;
        e2 += de * de;
    }
    Ok(ParamError {
        center_rmse: (c2 / l).sqrt(),
        expert_rmse: (e2 / l).sqrt(),
        center_max: cmax,
    })
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub fits: Vec<SmoeModel1>,
    pub fused: SmoeModel1,
    pub fit_errors: Vec<ParamError>,
    pub fused_error: ParamError,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub samples: usize,
    pub noise_var: f64,
    pub trials: Vec<Trial>,
    /// Sample positions and noisy values of the first fit of trial 0.
    pub sample_x: Vec<f64>,
    pub noisy: Vec<f64>,
}

impl Scenario {
    /// Median over all single fits of all trials.
    pub fn median_single_error(&self) -> ParamError {
        let errs: Vec<ParamError> = self
            .trials
            .iter()
            .flat_map(|t| t.fit_errors.iter().copied())
            .collect();
        median_error(&errs)
    }

    pub fn median_fused_error(&self) -> ParamError {
        let errs: Vec<ParamError> = self.trials.iter().map(|t| t.fused_error).collect();
        median_error(&errs)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_error(errs: &[ParamError]) -> ParamError {
    ParamError {
        center_rmse: median(errs.iter().map(|e| e.center_rmse).collect()),
        expert_rmse: median(errs.iter().map(|e| e.expert_rmse).collect()),
        center_max: median(errs.iter().map(|e| e.center_max).collect()),
    }
}

#[derive(Debug, Clone)]
pub struct DemoResult {
    pub truth: SmoeModel1,
    pub h: usize,
    pub curve_points: usize,
    pub scenarios: Vec<Scenario>,
}

/// Noisy equispaced samples of `truth` for one fit, drawn from the stream
/// identified by `(scenario, trial, model)`.
pub fn noisy_samples(
    truth: &SmoeModel1,
    samples: usize,
    noise_var: f64,
    seed: u64,
    stream: (usize, usize, usize),
) -> Result<BlockData<1>> {
    let id = ((stream.0 as u64) << 48) | ((stream.1 as u64) << 24) | stream.2 as u64;
    let mut rng = stream_rng(seed, id);
    let eps = standard_normals(&mut rng, samples);
    let sd = noise_var.sqrt();
    let clean = truth.predict_block(samples);
    let values = clean.iter().zip(eps).map(|(y, e)| y + sd * e).collect();
    BlockData::regular(values, (0, 0), samples)
}

pub fn run_demo(cfg: &Demo1DConfig) -> Result<DemoResult> {
    cfg.validate()?;
    let truth = &cfg.ground_truth;
    let mut scenarios = Vec::with_capacity(cfg.sample_counts.len());
    for (si, (&samples, &noise_var)) in cfg.sample_counts.iter().zip(&cfg.noise_vars).enumerate() {
        let trials: Vec<Trial> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Trial> {
                let fits = (0..cfg.h)
                    .map(|h| {
                        let block = noisy_samples(truth, samples, noise_var, cfg.seed, (si, t, h))?;
                        Ok(fit_block(&block, &cfg.fit)?.0)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let fused = average_parameters(&fits)?;
                let fit_errors = fits
                    .iter()
                    .map(|m| param_error(truth, m))
                    .collect::<Result<Vec<_>>>()?;
                let fused_error = param_error(truth, &fused)?;
                Ok(Trial {
                    fits,
                    fused,
                    fit_errors,
                    fused_error,
                })
            })
            .collect::<Result<_>>()?;
        let first = noisy_samples(truth, samples, noise_var, cfg.seed, (si, 0, 0))?;
        scenarios.push(Scenario {
            samples,
            noise_var,
            trials,
            sample_x: first.coords().iter().map(|x| x[0]).collect(),
            noisy: first.values().to_vec(),
        });
    }
    Ok(DemoResult {
        truth: truth.clone(),
        h: cfg.h,
        curve_points: cfg.curve_points,
        scenarios,
    })
}

/// Writes `params.tsv`, `curves.tsv`, `samples.tsv` and `summary.tsv` into
/// `dir` (created if missing). The column layouts are described in the
/// repository README.
pub fn write_demo(result: &DemoResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SmoeError::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| SmoeError::io(path, e))
    };
    write("params.tsv", params_table(result))?;
    write("curves.tsv", curves_table(result))?;
    write("samples.tsv", samples_table(result))?;
    write("summary.tsv", summary_table(result))?;
    Ok(())
}

fn params_rows(
    out: &mut String,
    si: usize,
    sc: &Scenario,
    trial: &str,
    source: &str,
    model_idx: &str,
    m: &SmoeModel1,
) {
    let pis = m.mixing_weights();
    for (j, (k, pi)) in m.kernels().iter().zip(pis).enumerate() {
        let _ = writeln!(
            out,
            "{si}\t{}\t{}\t{trial}\t{source}\t{model_idx}\t{j}\t{}\t{}\t{}\t{}",
            sc.samples,
            sc.noise_var,
            k.center[0],
            k.expert,
            k.precision_matrix()[0][0],
            pi
        );
    }
}

pub fn params_table(result: &DemoResult) -> String {
    let mut out = String::from("scenario\tsamples\tnoise_var\ttrial\tsource\tmodel\tkernel\tcenter\texpert\tprecision\tmix_weight\n");
    for (si, sc) in result.scenarios.iter().enumerate() {
        params_rows(&mut out, si, sc, "-", "true", "-", &result.truth);
        for (t, trial) in sc.trials.iter().enumerate() {
            for (h, m) in trial.fits.iter().enumerate() {
                let aligned = align_to(&result.truth, m).expect("same kernel count");
                params_rows(
                    &mut out,
                    si,
                    sc,
                    &t.to_string(),
                    "fit",
                    &h.to_string(),
                    &aligned,
                );
            }
            let fused = align_to(&result.truth, &trial.fused).expect("same kernel count");
            params_rows(&mut out, si, sc, &t.to_string(), "fused", "-", &fused);
        }
    }
    out
}

pub fn curves_table(result: &DemoResult) -> String {
    let l = result.truth.num_kernels();
    let mut out = String::from("scenario\tx\tclean\tsingle\tfused");
    for j in 0..l {
        let _ = write!(out, "\tgate_true_{j}");
    }
    for j in 0..l {
        let _ = write!(out, "\tgate_fused_{j}");
    }
    out.push('\n');
    for (si, sc) in result.scenarios.iter().enumerate() {
        let trial = &sc.trials[0];
        let single = &trial.fits[0];
        let fused = align_to(&result.truth, &trial.fused).expect("same kernel count");
        for i in 0..result.curve_points {
            let x = [pixel_coord(i, result.curve_points)];
            let _ = write!(
                out,
                "{si}\t{}\t{}\t{}\t{}",
                x[0],
                result.truth.predict(&x),
                single.predict(&x),
                fused.predict(&x)
            );
            for g in result
                .truth
                .gating_weights(&x)
                .into_iter()
                .chain(fused.gating_weights(&x))
            {
                let _ = write!(out, "\t{g}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn samples_table(result: &DemoResult) -> String {
    let mut out = String::from("scenario\tx\tnoisy\n");
    for (si, sc) in result.scenarios.iter().enumerate() {
        for (x, y) in sc.sample_x.iter().zip(&sc.noisy) {
            let _ = writeln!(out, "{si}\t{x}\t{y}");
        }
    }
    out
}

pub fn summary_table(result: &DemoResult) -> String {
    let mut out = String::from(
        "scenario\tsamples\tnoise_var\tH\ttrials\tsingle_center_rmse\tsingle_expert_rmse\tfused_center_rmse\tfused_expert_rmse\n",
    );
    for (si, sc) in result.scenarios.iter().enumerate() {
        let s = sc.median_single_error();
        let f = sc.median_fused_error();
        let _ = writeln!(
            out,
            "{si}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            sc.samples,
            sc.noise_var,
            result.h,
            sc.trials.len(),
            s.center_rmse,
            s.expert_rmse,
            f.center_rmse,
            f.expert_rmse
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> Demo1DConfig {
        Demo1DConfig {
            sample_counts: vec![64],
            noise_vars: vec![0.02],
            h: 1,
            trials: 2,
            curve_points: 50,
            fit: FitConfig {
                max_iters: 60,
                ..FitConfig::one_dimensional()
            },
            ..Demo1DConfig::default()
        }
    }

    #[test]
    fn single_model_fusion_is_the_fit() {
        let r = run_demo(&small_cfg()).unwrap();
        for t in &r.scenarios[0].trials {
            assert_eq!(t.fits.len(), 1);
            assert_eq!(t.fused, t.fits[0]);
        }
    }

    #[test]
    fn truth_has_zero_error() {
        let t = default_ground_truth();
        let e = param_error(&t, &t).unwrap();
        assert_eq!(
            (e.center_rmse, e.expert_rmse, e.center_max),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        c.noise_vars.push(0.1);
        assert!(c.validate().is_err());
        let c = Demo1DConfig {
            h: 0,
            ..small_cfg()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn tables_have_expected_rows() {
        let r = run_demo(&small_cfg()).unwrap();
        let curves = curves_table(&r);
        assert_eq!(curves.lines().count(), 1 + 50);
        assert!(curves.starts_with("scenario\tx\tclean\tsingle\tfused\tgate_true_0"));
        let params = params_table(&r);
        // truth + 2 trials × (1 fit + 1 fused), 3 kernels each
        assert_eq!(params.lines().count(), 1 + 3 * (1 + 2 * 2));
        assert_eq!(samples_table(&r).lines().count(), 1 + 64);
        assert_eq!(summary_table(&r).lines().count(), 2);
    }

    #[test]
    fn deterministic() {
        let a = run_demo(&small_cfg()).unwrap();
        let b = run_demo(&small_cfg()).unwrap();
        assert_eq!(params_table(&a), params_table(&b));
    }
}
