//! Unstabilized Sinkhorn on the Gibbs kernel `K = exp(-C / eps)`.
//!
//! Kept as the reference point for the stability study: nothing here guards
//! against underflow of `K` or overflow of the scaling vectors, so in single
//! precision the iteration breaks down once `eps` is small relative to the
//! cost range.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::real::{Precision, Real};
use crate::types::{
    CostMatrix, DiscreteDistribution, SinkhornConfig, SolveReport, SolveStatus, TracePoint,
};

use super::{check_dimensions, MIN_ROWS_PER_TASK};

/// Report plus the scaling vectors `u`, `v` (plan `diag(u) K diag(v)`).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardSolution<T = f64> {
    pub report: SolveReport,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

fn all_finite<T: Real>(values: &[T]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Standard-domain iteration `u = mu / (K v)`, `v = nu / (K^T u)` from `v = 1`,
/// in the precision of `T`. Stops as [`super::run_log_domain`] does.
pub fn run_standard_domain<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    config: &SinkhornConfig,
) -> Result<StandardSolution<T>> {
    config.validate()?;
    check_dimensions(cost, mu, nu)?;
    let plan = config.reduction_plan()?;
    let eps = T::of(config.epsilon);
    let (n, m) = (cost.rows(), cost.cols());
    let (mu_w, nu_w) = (mu.weights(), nu.weights());

    let start = Instant::now();
    let kernel: Vec<T> = cost.values().iter().map(|&c| (-c / eps).exp()).collect();
    // column sums read a transposed copy; the reduction order over rows is unchanged
    let mut kernel_t = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            kernel_t[j * n + i] = kernel[i * m + j];
        }
    }
    let mut u = vec![T::one(); n];
    let mut v = vec![T::one(); m];
    let mut kv = vec![T::zero(); n];
    let mut trace = Vec::new();
    let mut status = SolveStatus::NotConverged;
    let mut error = f64::INFINITY;
    let mut iterations = 0;

    let apply_kernel = |v: &[T], out: &mut [T]| {
        out.par_iter_mut()
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each_init(
                || plan.scratch(),
                |scratch, (i, o)| {
                    let row = &kernel[i * m..(i + 1) * m];
                    *o = plan.sum_with(scratch, m, |start, out| {
                        for ((o, &k), &x) in out.iter_mut().zip(&row[start..]).zip(&v[start..]) {
                            *o = k * x;
                        }
                    });
                },
            );
    };

    for k in 1..=config.max_iterations {
        iterations = k;
        apply_kernel(&v, &mut kv);
        for ((ui, &w), &s) in u.iter_mut().zip(mu_w).zip(&kv) {
            *ui = w / s;
        }
        v.par_iter_mut()
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each_init(
                || plan.scratch(),
                |scratch, (j, vj)| {
                    let s = plan.sum_with(scratch, n, |start, out| {
                        let col = &kernel_t[j * n + start..(j + 1) * n];
                        for ((o, &k), &x) in out.iter_mut().zip(col).zip(&u[start..]) {
                            *o = k * x;
                        }
                    });
                    *vj = nu_w[j] / s;
                },
            );
        if !all_finite(&u) || !all_finite(&v) {
            status = SolveStatus::NumericalFailure;
            error = f64::NAN;
            break;
        }
        if k % config.check_interval == 0 || k == config.max_iterations {
            apply_kernel(&v, &mut kv);
            let err = plan.sum_by(n, |i| (u[i] * kv[i] - mu_w[i]).abs());
            error = err.widen();
            trace.push(TracePoint { iteration: k, error });
            if !error.is_finite() {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if error < config.tolerance {
                status = SolveStatus::Converged;
                break;
            }
        }
    }

    let mut transport = f64::NAN;
    if status != SolveStatus::NumericalFailure {
        let row_costs: Vec<T> = (0..n)
            .map(|i| {
                let row = cost.row(i);
                let krow = &kernel[i * m..(i + 1) * m];
                u[i] * plan.sum_by(m, |j| row[j] * krow[j] * v[j])
            })
            .collect();
        let total = plan.sum_by(n, |i| row_costs[i]).widen();
        if total.is_finite() {
            transport = total;
        } else {
            status = SolveStatus::NumericalFailure;
        }
    }

    Ok(StandardSolution {
        report: SolveReport {
            status,
            iterations,
            final_marginal_error: error,
            transport_cost: transport,
            error_trace: trace,
            precision: T::PRECISION,
            elapsed: start.elapsed(),
        },
        u,
        v,
    })
}

/// Standard-domain solve in the precision named by `config.precision`.
pub fn solve_standard_domain(
    cost: &CostMatrix<f64>,
    mu: &DiscreteDistribution<f64>,
    nu: &DiscreteDistribution<f64>,
    config: &SinkhornConfig,
) -> Result<StandardSolution<f64>> {
    match config.precision {
        Precision::Double => run_standard_domain(cost, mu, nu, config),
        Precision::Single => {
            let sol = run_standard_domain::<f32>(&cost.cast(), &mu.cast()?, &nu.cast()?, config)?;
            Ok(StandardSolution {
                report: sol.report,
                u: sol.u.iter().map(|&x| x as f64).collect(),
                v: sol.v.iter().map(|&x| x as f64).collect(),
            })
        }
    }
}
