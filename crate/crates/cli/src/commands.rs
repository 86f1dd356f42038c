use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use rayon::prelude::*;
use sinkhorn_core::applications::{
    color_transfer, generate_rigid_pair, match_point_clouds, matching_accuracy, read_ppm,
    write_correspondences, write_point_cloud, write_ppm,
};
use sinkhorn_core::{
    generate_grid_problem, normalize_cost, solve, solve_standard_domain, CostMatrix,
    DiscreteDistribution, SinkhornConfig, SolveReport, SolveStatus,
};

use crate::args::{
    AblateArgs, BenchArgs, ColorTransferArgs, ConvergenceArgs, GlobalArgs, PointcloudArgs,
    ScaleArgs, SolverKind, StabilityArgs,
};
use crate::record::{encode_trace, ExperimentRecord};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const STABILITY_MAX_ITERATIONS: usize = 100_000;

/// A solve whose result the command depends on ended in numerical failure.
#[derive(Debug, thiserror::Error)]
#[error("{0}: solver reported a numerical failure")]
pub struct SolverFailure(pub String);

/// Records of one parameter point; `failed` marks a required solve that
/// ended in numerical failure.
#[derive(Debug, Default)]
pub struct PointOutput {
    pub records: Vec<ExperimentRecord>,
    pub failed: Option<String>,
}

struct Problem {
    cost: CostMatrix<f64>,
    mu: DiscreteDistribution<f64>,
    nu: DiscreteDistribution<f64>,
}

fn grid_problem(n: usize, m: usize, max_cost: f64, seed: u64) -> Result<Problem> {
    let grid = generate_grid_problem(n, m, seed)?;
    let scaled = normalize_cost(&grid.cost, max_cost)?;
    if scaled.degenerate {
        eprintln!("warning: {n}x{m} cost matrix is constant; using all-zero cost");
    }
    Ok(Problem {
        cost: scaled.cost,
        mu: grid.mu,
        nu: grid.nu,
    })
}

fn run_solver(kind: SolverKind, problem: &Problem, config: &SinkhornConfig) -> Result<SolveReport> {
    let report = match kind {
        SolverKind::Log => solve(&problem.cost, &problem.mu, &problem.nu, config)?.report,
        SolverKind::Standard => {
            solve_standard_domain(&problem.cost, &problem.mu, &problem.nu, config)?.report
        }
    };
    Ok(report)
}

fn mean_std(samples: &[Duration]) -> (f64, f64) {
    let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    let var = ms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / ms.len() as f64;
    (mean, var.sqrt())
}

struct Timing {
    warmup: usize,
    runs: usize,
}

/// Runs `warmup` untimed and `runs` timed solves; the record carries the last
/// report and the mean / standard deviation of the timed solves.
#[allow(clippy::too_many_arguments)]
fn timed_record(
    experiment: &str,
    variant: &str,
    kind: SolverKind,
    problem: &Problem,
    max_cost: f64,
    seed: u64,
    config: &SinkhornConfig,
    timing: &Timing,
) -> Result<ExperimentRecord> {
    for _ in 0..timing.warmup {
        run_solver(kind, problem, config)?;
    }
    let mut elapsed = Vec::with_capacity(timing.runs);
    let mut last = None;
    for _ in 0..timing.runs {
        let report = run_solver(kind, problem, config)?;
        elapsed.push(report.elapsed);
        last = Some(report);
    }
    let report = last.context("at least one timed run is required")?;
    let shape = (problem.cost.rows(), problem.cost.cols());
    let mut record = ExperimentRecord::from_report(
        experiment,
        variant,
        kind.name(),
        shape,
        Some(max_cost),
        seed,
        config,
        &report,
    );
    let (mean, std) = mean_std(&elapsed);
    record.repetitions = timing.runs;
    record.elapsed_ms = mean;
    record.elapsed_std_ms = std;
    Ok(record)
}

fn required(record: ExperimentRecord) -> PointOutput {
    let failed = (record.status == SolveStatus::NumericalFailure.label())
        .then(|| format!("{} {} n={} eps={}", record.experiment, record.variant, record.n, record.epsilon));
    PointOutput {
        records: vec![record],
        failed,
    }
}

/// Evaluates the points in order, at most `parallel` at a time.
pub fn run_points<P, F>(points: Vec<P>, parallel: usize, f: F) -> Result<Vec<PointOutput>>
where
    P: Send,
    F: Fn(P) -> Result<PointOutput> + Sync,
{
    if parallel <= 1 {
        return points.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .context("building experiment thread pool")?;
    pool.install(|| points.into_par_iter().map(&f).collect())
}

pub fn bench(global: &GlobalArgs, args: &BenchArgs) -> Result<Vec<PointOutput>> {
    let m = args.m.unwrap_or(args.n);
    let problem = grid_problem(args.n, m, args.max_cost, global.seed)?;
    let config = global.config(args.eps, DEFAULT_MAX_ITERATIONS);
    config.validate()?;
    let timing = Timing {
        warmup: args.warmup,
        runs: args.runs,
    };
    let record = timed_record(
        "bench",
        "full",
        args.solver,
        &problem,
        args.max_cost,
        global.seed,
        &config,
        &timing,
    )?;
    Ok(vec![required(record)])
}

pub fn scale(global: &GlobalArgs, args: &ScaleArgs) -> Result<Vec<PointOutput>> {
    let config = global.config(args.eps, DEFAULT_MAX_ITERATIONS);
    config.validate()?;
    let timing = Timing {
        warmup: args.warmup,
        runs: args.runs,
    };
    run_points(args.sizes.clone(), global.parallel_experiments, |n| {
        let problem = grid_problem(n, n, 1.0, global.seed)?;
        let record = timed_record(
            "scale",
            &format!("n={n}"),
            SolverKind::Log,
            &problem,
            1.0,
            global.seed,
            &config,
            &timing,
        )?;
        Ok(required(record))
    })
}

/// Single-knob variations of `base`, starting with `base` itself.
pub fn ablation_variants(base: &SinkhornConfig) -> Vec<(String, SolverKind, SinkhornConfig)> {
    let mut out = vec![("full".to_string(), SolverKind::Log, base.clone())];
    out.push((
        "flat".into(),
        SolverKind::Log,
        SinkhornConfig {
            chunk_width: 1,
            group_size: 1,
            ..base.clone()
        },
    ));
    for g in [64, 128, 256, 512] {
        out.push((
            format!("group={g}"),
            SolverKind::Log,
            SinkhornConfig {
                group_size: g,
                ..base.clone()
            },
        ));
    }
    for c in [1, 5, 10, 20] {
        out.push((
            format!("check={c}"),
            SolverKind::Log,
            base.clone().with_check_interval(c),
        ));
    }
    out.push((
        "transpose".into(),
        SolverKind::Log,
        base.clone().with_transpose_for_beta(!base.transpose_for_beta),
    ));
    out.push(("standard-domain".into(), SolverKind::Standard, base.clone()));
    out
}

pub fn ablate(global: &GlobalArgs, args: &AblateArgs) -> Result<Vec<PointOutput>> {
    let base = global.config(args.eps, DEFAULT_MAX_ITERATIONS);
    base.validate()?;
    let problem = grid_problem(args.n, args.n, 1.0, global.seed)?;
    let timing = Timing {
        warmup: args.warmup,
        runs: args.runs,
    };
    let mut outputs = run_points(
        ablation_variants(&base),
        global.parallel_experiments,
        |(variant, kind, config)| {
            let record = timed_record(
                "ablate",
                &variant,
                kind,
                &problem,
                1.0,
                global.seed,
                &config,
                &timing,
            )?;
            // a failing variation is a result, not an error of the command
            Ok(PointOutput {
                records: vec![record],
                failed: None,
            })
        },
    )?;
    let full = outputs[0].records[0].elapsed_ms;
    for out in &mut outputs {
        for r in &mut out.records {
            r.slowdown = (full > 0.0).then(|| r.elapsed_ms / full);
        }
    }
    if outputs[0].records[0].status == SolveStatus::NumericalFailure.label() {
        outputs[0].failed = Some("ablate full".into());
    }
    Ok(outputs)
}

pub fn stability(global: &GlobalArgs, args: &StabilityArgs) -> Result<Vec<PointOutput>> {
    let grid = generate_grid_problem(args.n, args.n, global.seed)?;
    let mut cells = Vec::new();
    for &max_cost in &args.max_cost_grid {
        for &eps in &args.eps_grid {
            for kind in [SolverKind::Log, SolverKind::Standard] {
                cells.push((max_cost, eps, kind));
            }
        }
    }
    run_points(cells, global.parallel_experiments, |(max_cost, eps, kind)| {
        let problem = Problem {
            cost: normalize_cost(&grid.cost, max_cost)?.cost,
            mu: grid.mu.clone(),
            nu: grid.nu.clone(),
        };
        let config = global.config(eps, STABILITY_MAX_ITERATIONS);
        config.validate()?;
        let report = run_solver(kind, &problem, &config)?;
        let record = ExperimentRecord::from_report(
            "stability",
            &format!("maxc={max_cost} eps={eps}"),
            kind.name(),
            (args.n, args.n),
            Some(max_cost),
            global.seed,
            &config,
            &report,
        );
        Ok(PointOutput {
            records: vec![record],
            failed: None,
        })
    })
}

pub fn convergence(global: &GlobalArgs, args: &ConvergenceArgs) -> Result<Vec<PointOutput>> {
    let mut points = Vec::new();
    for &n in &args.sizes {
        for &eps in &args.eps_list {
            points.push((n, eps));
        }
    }
    run_points(points, global.parallel_experiments, |(n, eps)| {
        let problem = grid_problem(n, n, 1.0, global.seed)?;
        let config = global.config(eps, DEFAULT_MAX_ITERATIONS);
        config.validate()?;
        let report = run_solver(SolverKind::Log, &problem, &config)?;
        let mut record = ExperimentRecord::from_report(
            "convergence",
            &format!("n={n} eps={eps}"),
            SolverKind::Log.name(),
            (n, n),
            Some(1.0),
            global.seed,
            &config,
            &report,
        );
        record.trace = encode_trace(&report.error_trace);
        Ok(required(record))
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn color_transfer_cmd(global: &GlobalArgs, args: &ColorTransferArgs) -> Result<Vec<PointOutput>> {
    let source = read_ppm(open(&args.source)?).with_context(|| format!("reading {}", args.source.display()))?;
    let target = read_ppm(open(&args.target)?).with_context(|| format!("reading {}", args.target.display()))?;
    let config = global.config(args.eps, DEFAULT_MAX_ITERATIONS);
    config.validate()?;
    let result = color_transfer(&source, &target, args.samples, &config, global.seed)?;
    write_ppm(create(&args.output)?, &result.image)?;
    let record = ExperimentRecord::from_report(
        "color-transfer",
        "barycentric",
        SolverKind::Log.name(),
        (args.samples, args.samples),
        None,
        global.seed,
        &config,
        &result.report,
    );
    Ok(vec![required(record)])
}

pub fn pointcloud(global: &GlobalArgs, args: &PointcloudArgs) -> Result<Vec<PointOutput>> {
    let dimension = args.dimension as usize;
    let translation = match &args.translation {
        Some(t) => t.clone(),
        None => [0.1, 0.0, 0.0][..dimension].to_vec(),
    };
    let pair = generate_rigid_pair(args.n, dimension, args.angle, &translation, args.sigma, global.seed)?;
    let config = global.config(args.eps, DEFAULT_MAX_ITERATIONS);
    config.validate()?;
    let matching = match_point_clouds(&pair.source, &pair.target, &config)?;
    if let Some(path) = &args.output {
        write_correspondences(create(path)?, &matching.correspondences)?;
    }
    if let Some(prefix) = &args.clouds {
        let name = |suffix: &str| {
            let mut p = prefix.clone().into_os_string();
            p.push(suffix);
            std::path::PathBuf::from(p)
        };
        write_point_cloud(create(&name(".source.txt"))?, &pair.source)?;
        write_point_cloud(create(&name(".target.txt"))?, &pair.target)?;
    }
    let mut record = ExperimentRecord::from_report(
        "pointcloud",
        &format!("d={dimension} sigma={}", args.sigma),
        SolverKind::Log.name(),
        (args.n, args.n),
        None,
        global.seed,
        &config,
        &matching.report,
    );
    record.accuracy = Some(matching_accuracy(&matching.correspondences, &pair.permutation));
    Ok(vec![required(record)])
}
