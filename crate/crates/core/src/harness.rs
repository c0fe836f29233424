//! Benchmark jobs: clean image × noise specs × pipeline configs, scored by
//! PSNR and SSIM and written as a tab-separated table.
//!
//! Job files are flat `key = value` text. Keys are the `bench`/`denoise`
//! flag names; list-valued keys take comma-separated items.
//!
//! ```text
//! # two noises × three strides → six rows
//! in = images/cameraman.pgm
//! noise = gaussian:0.01, speckle:0.01
//! mode = s-smoe
//! stride = 1, 2, 8
//! kernels = 4
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, SmoeError};
use crate::io::{load_image, save_image};
use crate::metrics::{psnr, ssim};
use crate::noise::{add_noise, NoiseKind, NoiseSpec};
use crate::pipeline::{denoise, Mode, PipelineConfig, Weighting};

pub const METRICS_HEADER: &str = "image\tmethod\tH\tnoise\tvar\tpsnr_db\tssim";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkJob {
    pub clean_image: PathBuf,
    pub noises: Vec<NoiseSpec>,
    pub pipelines: Vec<PipelineConfig>,
    pub out_dir: Option<PathBuf>,
    /// Also write noisy and denoised images next to the table.
    pub emit_images: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "in",
    "noise",
    "mode",
    "stride",
    "kernels",
    "block-size",
    "weighting",
    "max-iters",
    "seed",
    "out-dir",
    "emit-images",
];

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            SmoeError::format("config", format!("line {}: expected `key = value`", n + 1))
        })?;
        let key = k.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(SmoeError::format(
                "config",
                format!("line {}: unknown key `{key}`", n + 1),
            ));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(SmoeError::format(
                "config",
                format!("line {}: duplicate key `{key}`", n + 1),
            ));
        }
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| SmoeError::format("config", format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|item| parse_value(key, item)).collect()
}

/// Parses `kind:variance`, e.g. `speckle:0.01`.
pub fn parse_noise(item: &str, seed: u64) -> Result<NoiseSpec> {
    let (kind, var) = item.trim().split_once(':').ok_or_else(|| {
        SmoeError::format("noise", format!("expected `kind:variance`, got `{item}`"))
    })?;
    let kind: NoiseKind = kind.parse()?;
    NoiseSpec::new(kind, parse_value("noise", var)?, seed)
}

impl BenchmarkJob {
    /// Builds a job from job-file text. Relative `in` paths are resolved
    /// against `base_dir`.
    pub fn from_config_text(text: &str, base_dir: &Path) -> Result<Self> {
        let map = parse_kv(text)?;
        let get = |k: &str| map.get(k).map(String::as_str);
        let input = get("in").ok_or_else(|| SmoeError::format("config", "missing key `in`"))?;
        let seed: u64 = get("seed")
            .map(|v| parse_value("seed", v))
            .transpose()?
            .unwrap_or(0);
        let noises = get("noise")
            .ok_or_else(|| SmoeError::format("config", "missing key `noise`"))?
            .split(',')
            .map(|item| parse_noise(item, seed))
            .collect::<Result<Vec<_>>>()?;
        let modes: Vec<Mode> = get("mode")
            .map(|v| parse_list("mode", v))
            .transpose()?
            .unwrap_or(vec![Mode::SSmoe]);
        let strides: Vec<usize> = get("stride")
            .map(|v| parse_list("stride", v))
            .transpose()?
            .unwrap_or(vec![1]);

        let mut base = PipelineConfig::default();
        base.fit.seed = seed;
        if let Some(v) = get("kernels") {
            base.fit.num_kernels = parse_value("kernels", v)?;
        }
        if let Some(v) = get("max-iters") {
            base.fit.max_iters = parse_value("max-iters", v)?;
        }
        if let Some(v) = get("block-size") {
            base.block_size = parse_value("block-size", v)?;
        }
        if let Some(v) = get("weighting") {
            base.weighting = parse_value("weighting", v)?;
        }
        let mut pipelines = Vec::with_capacity(modes.len() * strides.len());
        for &mode in &modes {
            for &stride in &strides {
                pipelines.push(PipelineConfig {
                    mode,
                    stride,
                    ..base.clone()
                });
            }
        }
        let emit_images = get("emit-images")
            .map(|v| parse_value("emit-images", v))
            .transpose()?
            .unwrap_or(false);
        let job = BenchmarkJob {
            clean_image: base_dir.join(input),
            noises,
            pipelines,
            out_dir: get("out-dir").map(|d| base_dir.join(d)),
            emit_images,
        };
        job.validate()?;
        Ok(job)
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SmoeError::io(path, e))?;
        Self::from_config_text(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.noises.is_empty() || self.pipelines.is_empty() {
            return Err(SmoeError::invalid(
                "a job needs at least one noise spec and one pipeline",
            ));
        }
        Ok(())
    }

    /// Image id used in the table: the file stem of the clean image.
    pub fn image_id(&self) -> String {
        self.clean_image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub image: String,
    pub method: String,
    /// Models per pixel for S-SMoE (`(B/s)²`), or `G<n>` for a block-matching
    /// group bound.
    pub h: String,
    pub noise: NoiseKind,
    pub var: f64,
    /// `f64::INFINITY` when the output equals the clean image.
    pub psnr_db: f64,
    pub ssim: f64,
}

pub fn h_descriptor(cfg: &PipelineConfig) -> String {
    match cfg.mode {
        Mode::SSmoe => match cfg.models_per_pixel() {
            Some(h) => h.to_string(),
            None => format!("s{}", cfg.stride),
        },
        Mode::BmSmoe => format!("G{}", cfg.bm.max_group),
    }
}

fn var_tag(v: f64) -> String {
    v.to_string().replace('.', "p")
}

/// Runs every (noise, pipeline) pair in order: noise-major, then pipelines
/// as listed.
pub fn run_job(job: &BenchmarkJob) -> Result<Vec<MetricsRow>> {
    job.validate()?;
    let clean = load_image(&job.clean_image)?;
    let id = job.image_id();
    let image_dir = match (&job.out_dir, job.emit_images) {
        (Some(dir), true) => {
            fs::create_dir_all(dir).map_err(|e| SmoeError::io(dir, e))?;
            Some(dir)
        }
        _ => None,
    };
    let mut rows = Vec::with_capacity(job.noises.len() * job.pipelines.len());
    for spec in &job.noises {
        let noisy = add_noise(&clean, spec)?;
        let tag = format!("{id}_{}_{}", spec.kind.as_str(), var_tag(spec.variance));
        if let Some(dir) = image_dir {
            save_image(&noisy, dir.join(format!("{tag}_noisy.pgm")))?;
        }
        for p in &job.pipelines {
            let mut cfg = p.clone();
            if cfg.weighting == Weighting::Reliability {
                cfg.noise_var = Some(spec.variance);
            }
            let out = denoise(&noisy, &cfg)?;
            if let Some(dir) = image_dir {
                let name = format!(
                    "{tag}_{}_b{}_s{}.pgm",
                    cfg.mode.as_str(),
                    cfg.block_size,
                    cfg.stride
                );
                save_image(&out, dir.join(name))?;
            }
            rows.push(MetricsRow {
                image: id.clone(),
                method: cfg.mode.as_str().to_string(),
                h: h_descriptor(&cfg),
                noise: spec.kind,
                var: spec.variance,
                psnr_db: psnr(&clean, &out)?,
                ssim: ssim(&clean, &out)?,
            });
        }
    }
    Ok(rows)
}

/// Header line plus one line per row. PSNR has 4 decimals (`inf` for
/// identical images), SSIM 6.
pub fn render_metrics(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let psnr = if r.psnr_db.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.4}", r.psnr_db)
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{psnr}\t{:.6}",
            r.image,
            r.method,
            r.h,
            r.noise.as_str(),
            r.var,
            r.ssim
        );
    }
    out
}

pub fn write_metrics(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_metrics(rows)).map_err(|e| SmoeError::io(path, e))
}
