use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use sinkhorn_cli::record::{decode_trace, read_records, ExperimentRecord, CSV_HEADER};
use sinkhorn_core::applications::{read_ppm, write_ppm, RgbImage};

fn sinkhorn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinkhorn"))
        .args(args)
        .output()
        .expect("failed to launch sinkhorn")
}

fn records(args: &[&str]) -> Vec<ExperimentRecord> {
    let out = sinkhorn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = args.contains(&"--json");
    read_records(out.stdout.as_slice(), json).unwrap()
}

#[test]
fn bench_rejects_empty_problem() {
    let out = sinkhorn(&["bench", "--n", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn invalid_reduction_plan_is_a_usage_error() {
    let out = sinkhorn(&["bench", "--n", "16", "--group-size", "4096"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_precision_is_a_usage_error() {
    assert_eq!(sinkhorn(&["--precision", "half", "bench"]).status.code(), Some(2));
}

#[test]
fn small_bench_is_fast_and_converges() {
    let start = Instant::now();
    let rows = records(&["bench", "--n", "64", "--eps", "0.1"]);
    assert!(start.elapsed().as_secs_f64() < 1.0, "took {:?}", start.elapsed());
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!((r.experiment.as_str(), r.status.as_str()), ("bench", "converged"));
    assert_eq!((r.n, r.m, r.repetitions), (64, 64, 10));
    assert!(r.marginal_error.unwrap() < 1e-6);
    assert!(r.elapsed_ms > 0.0);
}

#[test]
fn csv_output_has_fixed_header() {
    let out = sinkhorn(&["bench", "--n", "16", "--runs", "1", "--warmup", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn out_flag_writes_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let out = sinkhorn(&[
        "--json",
        "--out",
        path.to_str().unwrap(),
        "convergence",
        "--sizes",
        "16,32",
        "--eps",
        "0.1",
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let rows = read_records(text.as_bytes(), true).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let trace = decode_trace(&r.trace).unwrap();
        assert_eq!(trace.len(), r.marginal_checks);
        assert_eq!(trace.last().unwrap().error, r.marginal_error.unwrap());
    }
}

#[test]
fn scale_reports_matrix_bytes() {
    let rows = records(&["scale", "--sizes", "32,64", "--runs", "1", "--warmup", "0"]);
    let bytes: Vec<usize> = rows.iter().map(|r| r.matrix_bytes).collect();
    assert_eq!(bytes, [4 * 32 * 32, 4 * 64 * 64]);
    let rows = records(&["--precision", "double", "scale", "--sizes", "32", "--runs", "1"]);
    assert_eq!(rows[0].matrix_bytes, 8 * 32 * 32);
}

#[test]
fn ablate_counts_checks_and_reports_slowdown() {
    let rows = records(&["ablate", "--n", "64", "--eps", "0.05", "--runs", "1", "--warmup", "0"]);
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[0].variant, "full");
    assert_eq!(rows[0].slowdown, Some(1.0));
    let by = |v: &str| rows.iter().find(|r| r.variant == v).unwrap();
    let (c1, c10) = (by("check=1"), by("check=10"));
    assert_eq!(c1.marginal_checks, c1.iterations);
    assert!(c1.marginal_checks > c10.marginal_checks);
    let full_cost = rows[0].transport_cost.unwrap();
    for r in &rows {
        assert!(r.slowdown.unwrap() > 0.0);
        if r.status == "converged" {
            let c = r.transport_cost.unwrap();
            assert!(((c - full_cost) / full_cost).abs() <= 1e-3, "{}: {c} vs {full_cost}", r.variant);
        }
    }
    assert_eq!(by("standard-domain").status, "converged");
}

#[test]
fn stability_covers_grid_for_both_solvers() {
    let rows = records(&["stability", "--n", "32", "--eps", "1,0.1", "--max-cost", "1,10"]);
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert!(["converged", "diverged", "nan"].contains(&r.status.as_str()));
    }
    let benign = rows
        .iter()
        .find(|r| r.solver == "standard" && r.epsilon == 1.0 && r.max_cost == Some(1.0))
        .unwrap();
    assert_eq!(benign.status, "converged");
}

#[test]
fn seeded_output_is_identical_across_runs_workers_and_parallelism() {
    let base = ["stability", "--n", "48", "--eps", "0.1,0.01", "--max-cost", "1,10", "--seed", "3"];
    let reference = records(&base);
    for extra in [
        &["--workers", "1"][..],
        &["--workers", "4"],
        &["--workers", "4", "--parallel-experiments", "3"],
        &[],
    ] {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        let rows = records(&args);
        assert_eq!(rows.len(), reference.len());
        for (a, b) in rows.iter().zip(&reference) {
            assert!(a.same_numbers(b), "{extra:?}: {a:?} vs {b:?}");
        }
    }
    let other_seed = records(&["stability", "--n", "48", "--eps", "0.1", "--max-cost", "1", "--seed", "4"]);
    assert_ne!(other_seed[0].transport_cost, reference[0].transport_cost);
}

fn write_image(path: &Path, image: &RgbImage) {
    write_ppm(std::fs::File::create(path).unwrap(), image).unwrap();
}

#[test]
fn color_transfer_writes_recolored_image() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt, out) = (
        dir.path().join("src.ppm"),
        dir.path().join("tgt.ppm"),
        dir.path().join("out.ppm"),
    );
    let source = RgbImage::from_fn(20, 12, |x, y| [x as f64 / 19.0, y as f64 / 11.0, 0.5]).unwrap();
    let target = RgbImage::from_fn(16, 16, |x, y| [0.2, x as f64 / 30.0, 0.5 + y as f64 / 30.0]).unwrap();
    write_image(&src, &source);
    write_image(&tgt, &target);
    let rows = records(&[
        "color-transfer",
        "--source",
        src.to_str().unwrap(),
        "--target",
        tgt.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--samples",
        "64",
        "--eps",
        "0.05",
    ]);
    assert_eq!(rows[0].experiment, "color-transfer");
    assert_eq!((rows[0].n, rows[0].max_cost), (64, None));
    let image = read_ppm(std::io::BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();
    assert_eq!((image.width(), image.height()), (20, 12));
    // recolored pixels are averages of target colors
    for p in image.pixels() {
        assert!((p[0] - 0.2).abs() <= 1.0 / 255.0);
        assert!(p[1] <= 0.5 + 1.0 / 255.0);
    }
}

#[test]
fn color_transfer_missing_input_fails() {
    let out = sinkhorn(&[
        "color-transfer",
        "--source",
        "/nonexistent/a.ppm",
        "--target",
        "/nonexistent/b.ppm",
        "--output",
        "/nonexistent/c.ppm",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pointcloud_writes_correspondences() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.txt");
    let prefix = dir.path().join("cloud");
    let rows = records(&[
        "pointcloud",
        "--n",
        "30",
        "--dimension",
        "2",
        "--sigma",
        "0",
        "--translation",
        "0.05,-0.02",
        "--angle",
        "0.0",
        "--output",
        path.to_str().unwrap(),
        "--clouds",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(rows[0].accuracy, Some(1.0));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 30);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0].parse::<usize>().unwrap(), i);
        assert!(fields[2].parse::<f64>().unwrap() > 0.0);
    }
    for suffix in ["cloud.source.txt", "cloud.target.txt"] {
        let cloud = std::fs::read_to_string(dir.path().join(suffix)).unwrap();
        assert_eq!(cloud.lines().count(), 30);
    }
}

#[test]
fn pointcloud_rejects_bad_translation() {
    let out = sinkhorn(&["pointcloud", "--n", "10", "--dimension", "2", "--translation", "0.1,0,0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sinkhorn(&["pointcloud", "--dimension", "4"]);
    assert_eq!(out.status.code(), Some(2));
}
