use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use smoe_core::demo1d::{run_demo, summary_table, write_demo, Demo1DConfig};
use smoe_core::harness::{render_metrics, run_job, write_metrics};
use smoe_core::{
    fit_block, load_image, model_to_text, psnr, save_image, BenchmarkJob, FitConfig, Mode,
    PipelineConfig, SmoeError, Weighting,
};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;

/// Steered Mixture-of-Experts block denoising.
#[derive(Parser, Debug)]
#[command(name = "smoe", version)]
struct Cli {
    /// Worker threads for block fitting (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Denoise an image and print the PSNR of the output against the input.
    Denoise(DenoiseArgs),
    /// Run a benchmark job file and write `metrics.tsv`.
    Bench(BenchArgs),
    /// Run the 1D small-sample experiment and write its tables.
    Demo1d(DemoArgs),
    /// Fit one block of an image and print the model.
    Fitblock(FitblockArgs),
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Kernels per block model.
    #[arg(long, default_value_t = 4)]
    kernels: usize,
    /// Optimizer iteration cap per block.
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    /// Seed for all randomness (env SMOE_SEED).
    #[arg(long, env = "SMOE_SEED", default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            num_kernels: self.kernels,
            max_iters: self.max_iters,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    /// Input image (PGM P5 or 8-bit grayscale PNG).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PGM.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "s-smoe", value_parser = ["s-smoe", "bm-smoe"])]
    mode: String,
    /// Sliding-window step (S-SMoE) in pixels.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Block side length in pixels.
    #[arg(long, default_value_t = 8)]
    block_size: usize,
    /// Noise variance of the input; required for reliability weighting.
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "reliability"])]
    weighting: String,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Job file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out-dir` in the job file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides `seed` in the job file (env SMOE_SEED).
    #[arg(long, env = "SMOE_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed for all randomness (env SMOE_SEED).
    #[arg(long, env = "SMOE_SEED", default_value_t = 0)]
    seed: u64,
    /// Independent trials per scenario.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Models fused per trial.
    #[arg(long = "models", default_value_t = 10)]
    h: usize,
}

#[derive(Args, Debug)]
struct FitblockArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Top row of the block.
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Left column of the block.
    #[arg(long, default_value_t = 0)]
    col: usize,
    /// Block side length in pixels.
    #[arg(long, default_value_t = 8)]
    block_size: usize,
    #[command(flatten)]
    fit: FitArgs,
}

fn exit_code(err: &SmoeError) -> u8 {
    match err {
        SmoeError::InvalidArgument(_) => EXIT_USAGE,
        SmoeError::Format { .. } | SmoeError::Io { .. } | SmoeError::Internal(_) => EXIT_IO,
    }
}

fn denoise(args: DenoiseArgs) -> smoe_core::Result<()> {
    let img = load_image(&args.input)?;
    let cfg = PipelineConfig {
        block_size: args.block_size,
        stride: args.stride,
        fit: args.fit.config(),
        mode: args.mode.parse::<Mode>()?,
        weighting: args.weighting.parse::<Weighting>()?,
        noise_var: args.noise_var,
        ..PipelineConfig::default()
    };
    let out = smoe_core::denoise(&img, &cfg)?;
    save_image(&out, &args.out)?;
    let db = psnr(&img, &out.quantized())?;
    println!(
        "psnr_vs_input_db\t{}",
        if db.is_infinite() {
            "inf".into()
        } else {
            format!("{db:.4}")
        }
    );
    Ok(())
}

fn bench(args: BenchArgs) -> smoe_core::Result<()> {
    let mut job = BenchmarkJob::from_config_file(&args.config)?;
    if let Some(dir) = args.out_dir {
        job.out_dir = Some(dir);
    }
    if let Some(seed) = args.seed {
        for n in &mut job.noises {
            n.seed = seed;
        }
        for p in &mut job.pipelines {
            p.fit.seed = seed;
        }
    }
    let dir = job.out_dir.clone().ok_or_else(|| {
        SmoeError::InvalidArgument("no output directory: pass --out-dir or set `out-dir`".into())
    })?;
    let rows = run_job(&job)?;
    fs::create_dir_all(&dir).map_err(|e| SmoeError::Io {
        path: dir.clone(),
        source: e,
    })?;
    write_metrics(&rows, dir.join("metrics.tsv"))?;
    print!("{}", render_metrics(&rows));
    Ok(())
}

fn demo1d(args: DemoArgs) -> smoe_core::Result<()> {
    let cfg = Demo1DConfig {
        seed: args.seed,
        trials: args.trials,
        h: args.h,
        ..Demo1DConfig::default()
    };
    let result = run_demo(&cfg)?;
    write_demo(&result, &args.out_dir)?;
    print!("{}", summary_table(&result));
    Ok(())
}

fn fitblock(args: FitblockArgs) -> smoe_core::Result<()> {
    let img = load_image(&args.input)?;
    let block = img.block((args.row, args.col), args.block_size)?;
    let (model, report) = fit_block(&block, &args.fit.config())?;
    println!("# final_loss = {}", report.final_loss);
    println!("# iters_used = {}", report.iters_used);
    println!("# grad_norm = {}", report.grad_norm);
    print!("{}", model_to_text(&model));
    Ok(())
}

fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return EXIT_USAGE;
        }
    }
    let result = match cli.command {
        Command::Denoise(a) => denoise(a),
        Command::Bench(a) => bench(a),
        Command::Demo1d(a) => demo1d(a),
        Command::Fitblock(a) => fitblock(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run_cli(std::env::args_os()))
}
