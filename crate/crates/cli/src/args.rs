use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sinkhorn_core::{Precision, SinkhornConfig};

#[derive(Debug, Parser)]
#[command(name = "sinkhorn", version, about = "Entropic optimal transport experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for problem generation and sampling
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true, default_value = "single")]
    pub precision: Precision,

    /// Convergence tolerance on the L1 row-marginal error
    #[arg(long = "tol", global = true, default_value_t = 1e-6, value_parser = positive_f64)]
    pub tolerance: f64,

    /// Iteration budget (default 10000; 100000 for `stability`)
    #[arg(long = "max-iters", global = true, value_parser = positive_usize)]
    pub max_iterations: Option<usize>,

    /// Iterations between marginal-error checks
    #[arg(long, global = true, default_value_t = 10, value_parser = positive_usize)]
    pub check_interval: usize,

    #[arg(long, global = true, default_value_t = 32, value_parser = positive_usize)]
    pub chunk_width: usize,

    #[arg(long, global = true, default_value_t = 256, value_parser = positive_usize)]
    pub group_size: usize,

    /// Keep a transposed cost copy for contiguous column updates
    #[arg(long, global = true)]
    pub transpose_beta: bool,

    /// Write records here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Emit one JSON object per line instead of CSV
    #[arg(long, global = true)]
    pub json: bool,

    /// Independent parameter points run concurrently
    #[arg(long, global = true, default_value_t = 1, value_parser = positive_usize)]
    pub parallel_experiments: usize,

    /// Worker threads for the solver (default: all cores)
    #[arg(long, global = true, value_parser = positive_usize)]
    pub workers: Option<usize>,
}

impl GlobalArgs {
    pub fn config(&self, epsilon: f64, default_max_iterations: usize) -> SinkhornConfig {
        SinkhornConfig {
            epsilon,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations.unwrap_or(default_max_iterations),
            check_interval: self.check_interval,
            chunk_width: self.chunk_width,
            group_size: self.group_size,
            transpose_for_beta: self.transpose_beta,
            precision: self.precision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Log,
    Standard,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Log => "log",
            SolverKind::Standard => "standard",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time repeated solves of one grid problem
    Bench(BenchArgs),
    /// Time solves over a range of problem sizes
    Scale(ScaleArgs),
    /// Compare the full configuration against single-knob variations
    Ablate(AblateArgs),
    /// Convergence status of both solvers over an (eps, max cost) grid
    Stability(StabilityArgs),
    /// Marginal-error traces per (n, eps)
    Convergence(ConvergenceArgs),
    /// Transfer the color palette of one PPM image onto another
    ColorTransfer(ColorTransferArgs),
    /// Correspondences between a point cloud and its rigid image
    Pointcloud(PointcloudArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 512, value_parser = positive_usize)]
    pub n: usize,
    /// Columns (default: n)
    #[arg(long, value_parser = positive_usize)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub eps: f64,
    /// Cost matrix rescaled to [0, max_cost]
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub max_cost: f64,
    #[arg(long, value_enum, default_value_t = SolverKind::Log)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub runs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [256, 512, 1024, 2048], value_parser = positive_usize)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 3, value_parser = positive_usize)]
    pub runs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[arg(long, default_value_t = 512, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 3, value_parser = positive_usize)]
    pub runs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[arg(long, default_value_t = 512, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long = "eps", value_delimiter = ',', default_values_t = [1.0, 0.1, 0.01, 0.005, 0.001, 1e-4], value_parser = positive_f64)]
    pub eps_grid: Vec<f64>,
    #[arg(long = "max-cost", value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0], value_parser = positive_f64)]
    pub max_cost_grid: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [512], value_parser = positive_usize)]
    pub sizes: Vec<usize>,
    #[arg(long = "eps", value_delimiter = ',', default_values_t = [0.1, 0.01, 0.001], value_parser = positive_f64)]
    pub eps_list: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ColorTransferArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Recolored image (PPM)
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 512, value_parser = positive_usize)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub eps: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PointcloudArgs {
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub dimension: u8,
    /// Rotation about the z axis, radians
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub angle: f64,
    /// Comma-separated translation (default 0.1 along x)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub translation: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub eps: f64,
    /// Correspondence list (`i j weight` per line)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the generated source and target clouds with this path prefix
    #[arg(long)]
    pub clouds: Option<PathBuf>,
}
