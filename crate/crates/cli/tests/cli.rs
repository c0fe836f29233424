use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smoe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoe"))
        .args(args)
        .env_remove("SMOE_SEED")
        .output()
        .unwrap()
}

fn write_pgm(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            bytes.push(f(r, c));
        }
    }
    fs::write(path, bytes).unwrap();
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn constant_image_is_reproduced_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("c.pgm"), dir.path().join("o.pgm"));
    write_pgm(&input, 16, 16, |_, _| 90);
    let input = input.to_str().unwrap();
    let o = smoe(&[
        "denoise",
        "--in",
        input,
        "--out",
        out.to_str().unwrap(),
        "--stride",
        "8",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "psnr_vs_input_db\tinf\n");
    assert_eq!(fs::read(out).unwrap(), fs::read(input).unwrap());
}

#[test]
fn repeated_denoise_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("n.pgm");
    write_pgm(&input, 20, 18, |r, c| ((r * 37 + c * 91) % 256) as u8);
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("o{i}.pgm"));
        let o = smoe(&[
            "denoise",
            "--in",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--mode",
            "bm-smoe",
            "--weighting",
            "reliability",
            "--noise-var",
            "0.01",
            "--seed",
            "3",
            "--max-iters",
            "50",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(smoe(&[]).status.code(), Some(1));
    assert_eq!(smoe(&["transmogrify"]).status.code(), Some(1));
    assert_eq!(smoe(&["denoise", "--in", "x.pgm"]).status.code(), Some(1));
    assert_eq!(
        smoe(&["denoise", "--in", "x", "--out", "y", "--mode", "nlm"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.pgm");
    write_pgm(&input, 8, 8, |_, _| 1);
    let o = smoe(&[
        "denoise",
        "--in",
        input.to_str().unwrap(),
        "--out",
        "/dev/null",
        "--stride",
        "9",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stride"));
    let o = smoe(&[
        "denoise",
        "--in",
        input.to_str().unwrap(),
        "--out",
        "/dev/null",
        "--weighting",
        "reliability",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn io_and_format_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoe(&["denoise", "--in", "/nonexistent/in.pgm", "--out", "o.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/in.pgm"));
    let bad = dir.path().join("bad.pgm");
    fs::write(&bad, b"P5\n2 2\n1023\n\0\0\0\0").unwrap();
    let o = smoe(&[
        "fitblock",
        "--in",
        bad.to_str().unwrap(),
        "--block-size",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("maxval"));
}

#[test]
fn help_lists_defaults() {
    let o = smoe(&["denoise", "--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for flag in [
        "--in",
        "--out",
        "--mode",
        "--stride",
        "--kernels",
        "--noise-var",
        "--weighting",
        "--seed",
        "--threads",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    assert!(text.contains("[default: 1]") && text.contains("[default: 4]"));
}

#[test]
fn seed_comes_from_environment_unless_flag_given() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("b.pgm");
    write_pgm(&input, 8, 8, |r, c| (r * 30 + c) as u8);
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_smoe"));
        cmd.args(["fitblock", "--in", input.to_str().unwrap()])
            .env_remove("SMOE_SEED");
        if let Some(e) = env {
            cmd.env("SMOE_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        cmd.output().unwrap()
    };
    assert!(run(Some("5"), None).status.success());
    assert_eq!(run(Some("not-a-number"), None).status.code(), Some(1));
    assert!(run(Some("not-a-number"), Some("5")).status.success());
}

#[test]
fn fitblock_dumps_every_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("f.pgm");
    write_pgm(&input, 12, 12, |r, c| if c > r { 200 } else { 30 });
    let o = smoe(&[
        "fitblock",
        "--in",
        input.to_str().unwrap(),
        "--row",
        "2",
        "--col",
        "3",
        "--kernels",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("dim = 2\nkernels = 3\n"));
    assert_eq!(text.matches("[kernel ").count(), 3);
    assert!(text.starts_with("# final_loss = "));
}

#[test]
fn bench_writes_one_row_per_noise_and_stride() {
    let dir = tempfile::tempdir().unwrap();
    write_pgm(&dir.path().join("img.pgm"), 16, 16, |r, c| {
        if r + c < 16 {
            40
        } else {
            200
        }
    });
    let cfg = dir.path().join("job.cfg");
    fs::write(
        &cfg,
        "in = img.pgm\nnoise = gaussian:0.01, speckle:0.02\nstride = 8, 4, 2\nmax-iters = 40\n",
    )
    .unwrap();
    let out = dir.path().join("results");
    let o = smoe(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("metrics.tsv")).unwrap();
    assert_eq!(table, stdout(&o));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "image\tmethod\tH\tnoise\tvar\tpsnr_db\tssim");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("img\ts-smoe\t1\tgaussian\t0.01\t"));
    assert!(lines[6].starts_with("img\ts-smoe\t16\tspeckle\t0.02\t"));
}

#[test]
fn bench_without_output_dir_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.cfg");
    fs::write(&cfg, "in = img.pgm\nnoise = gaussian:0.01\n").unwrap();
    assert_eq!(
        smoe(&["bench", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn demo1d_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoe(&[
        "demo1d",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--trials",
        "2",
        "--models",
        "2",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["params.tsv", "curves.tsv", "samples.tsv", "summary.tsv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let curves = fs::read_to_string(dir.path().join("curves.tsv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 1000);
    assert_eq!(
        stdout(&o),
        fs::read_to_string(dir.path().join("summary.tsv")).unwrap()
    );
}
