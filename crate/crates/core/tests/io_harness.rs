use std::fs;
use std::path::Path;

use rand::Rng;
use smoe_core::harness::{render_metrics, run_job, write_metrics, METRICS_HEADER};
use smoe_core::noise::stream_rng;
use smoe_core::{
    load_image, save_image, BenchmarkJob, GrayImage, MetricsRow, NoiseKind, SmoeError,
};

#[test]
fn file_round_trip_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(31, 0);
    for i in 0..20 {
        let (w, h) = (rng.random_range(1..30), rng.random_range(1..30));
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        let (a, b) = (
            dir.path().join(format!("{i}a.pgm")),
            dir.path().join(format!("{i}b.pgm")),
        );
        save_image(&img, &a).unwrap();
        save_image(&load_image(&a).unwrap(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}

#[test]
fn one_pixel_black_file_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.pgm");
    save_image(&GrayImage::constant(1, 1, 0.0).unwrap(), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes, b"P5\n1 1\n255\n\0");
    assert_eq!(*bytes.last().unwrap(), 0);
}

#[test]
fn io_errors_carry_the_path() {
    let err = load_image("/nonexistent/dir/x.pgm").unwrap_err();
    assert!(
        matches!(&err, SmoeError::Io { path, .. } if path == Path::new("/nonexistent/dir/x.pgm"))
    );
    assert!(err.to_string().contains("/nonexistent/dir/x.pgm"));
    let err = save_image(
        &GrayImage::constant(1, 1, 0.0).unwrap(),
        "/nonexistent/dir/y.pgm",
    )
    .unwrap_err();
    assert!(matches!(err, SmoeError::Io { .. }));
}

#[test]
fn truncated_file_names_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.pgm");
    fs::write(&path, b"P5\n4 4\n255\n\x01\x02").unwrap();
    assert!(matches!(
        load_image(&path).unwrap_err(),
        SmoeError::Format {
            field: "payload",
            ..
        }
    ));
}

fn fixed_rows() -> Vec<MetricsRow> {
    let row = |method: &str, h: &str, noise, var, psnr_db, ssim| MetricsRow {
        image: "lena".into(),
        method: method.into(),
        h: h.into(),
        noise,
        var,
        psnr_db,
        ssim,
    };
    vec![
        row(
            "s-smoe",
            "1",
            NoiseKind::Gaussian,
            0.01,
            30.123456,
            0.9123456,
        ),
        row("s-smoe", "64", NoiseKind::Gaussian, 0.01, 32.9, 0.97),
        row(
            "bm-smoe",
            "G16",
            NoiseKind::Speckle,
            0.005,
            33.15,
            0.9649999,
        ),
        row("s-smoe", "16", NoiseKind::Speckle, 0.0, f64::INFINITY, 1.0),
    ]
}

#[test]
fn metrics_table_matches_golden_file() {
    let golden = include_str!("data/metrics_golden.tsv");
    assert_eq!(render_metrics(&fixed_rows()), golden);
    assert!(golden.starts_with(METRICS_HEADER));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tsv");
    write_metrics(&fixed_rows(), &path).unwrap();
    assert_eq!(fs::read_to_string(path).unwrap(), golden);
}

#[test]
fn job_runs_noise_major_cartesian_product() {
    let dir = tempfile::tempdir().unwrap();
    let clean = GrayImage::from_fn(16, 16, |r, c| if r < c { 0.3 } else { 0.6 }).unwrap();
    save_image(&clean, dir.path().join("tile.pgm")).unwrap();
    let text = "in = tile.pgm\nnoise = gaussian:0.01, speckle:0.01\nstride = 8, 4, 2\nmax-iters = 30\nemit-images = true\nout-dir = out\n";
    let job = BenchmarkJob::from_config_text(text, dir.path()).unwrap();
    let rows = run_job(&job).unwrap();
    let keys: Vec<(NoiseKind, String)> = rows.iter().map(|r| (r.noise, r.h.clone())).collect();
    let expect = |k| {
        [
            (k, "1".to_string()),
            (k, "4".to_string()),
            (k, "16".to_string()),
        ]
    };
    assert_eq!(
        keys,
        [expect(NoiseKind::Gaussian), expect(NoiseKind::Speckle)].concat()
    );
    assert!(rows
        .iter()
        .all(|r| r.psnr_db.is_finite() && (-1.0..=1.0).contains(&r.ssim)));
    // 2 noisy + 6 denoised images
    assert_eq!(fs::read_dir(dir.path().join("out")).unwrap().count(), 8);
}
