//! Log-domain Sinkhorn iteration and the quantities derived from its
//! potentials.
//!
//! Each dual update is one stabilized LogSumExp per row (alpha) or column
//! (beta). Rows and columns are independent and are processed in parallel;
//! every reduction follows the fixed tree of [`ReductionPlan`], so results do
//! not depend on the number of worker threads.

mod diagnostics;
mod standard;

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{Precision, Real};
use crate::reduction::ReductionPlan;
use crate::types::{
    CostMatrix, DiscreteDistribution, DualPotentials, SinkhornConfig, SolveReport, SolveStatus,
    TracePoint,
};

pub use diagnostics::{
    contraction_rate_bound, kkt_residual, materialize_plan, regularized_objective,
    ContractionBounds,
};
pub use standard::{run_standard_domain, solve_standard_domain, StandardSolution};

/// Rows handed to a worker at a time.
const MIN_ROWS_PER_TASK: usize = 8;

/// Potentials together with the report of the solve that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T = f64> {
    pub report: SolveReport,
    pub potentials: DualPotentials<T>,
}

pub(crate) fn check_dimensions<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
) -> Result<()> {
    if mu.len() != cost.rows() {
        return Err(Error::DimensionMismatch {
            expected: cost.rows(),
            actual: mu.len(),
        });
    }
    if nu.len() != cost.cols() {
        return Err(Error::DimensionMismatch {
            expected: cost.cols(),
            actual: nu.len(),
        });
    }
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `out[k] = (potential[k] - cost[k]) / eps + log_weight[k]`.
#[inline(always)]
fn contiguous_operands<T: Real>(
    out: &mut [T],
    potential: &[T],
    cost: &[T],
    log_weight: &[T],
    inv_eps: T,
) {
    let len = out.len();
    let (potential, cost, log_weight) = (&potential[..len], &cost[..len], &log_weight[..len]);
    for k in 0..len {
        out[k] = (potential[k] - cost[k]) * inv_eps + log_weight[k];
    }
}

fn all_finite<T: Real>(values: &[T]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// `alpha_i = -eps * LSE_j((beta_j - C_ij) / eps + ln nu_j)`, written into `alpha`.
pub fn update_alpha_into<T: Real>(
    cost: &CostMatrix<T>,
    nu: &DiscreteDistribution<T>,
    beta: &[T],
    eps: T,
    plan: &ReductionPlan,
    alpha: &mut [T],
) {
    let m = cost.cols();
    let inv_eps = eps.recip();
    let log_nu = nu.log_weights();
    alpha
        .par_iter_mut()
        .with_min_len(MIN_ROWS_PER_TASK)
        .enumerate()
        .for_each_init(
            || plan.scratch(),
            |scratch, (i, a)| {
                let row = cost.row(i);
                let lse = plan.log_sum_exp_with(scratch, m, |start, out| {
                    contiguous_operands(out, &beta[start..], &row[start..], &log_nu[start..], inv_eps)
                });
                *a = -eps * lse;
            },
        );
}

/// Row update of the log-domain iteration.
pub fn update_alpha<T: Real>(
    cost: &CostMatrix<T>,
    nu: &DiscreteDistribution<T>,
    beta: &[T],
    eps: T,
    plan: &ReductionPlan,
) -> Result<Vec<T>> {
    check_len(cost.cols(), nu.len())?;
    check_len(cost.cols(), beta.len())?;
    let mut alpha = vec![T::zero(); cost.rows()];
    update_alpha_into(cost, nu, beta, eps, plan, &mut alpha);
    if !all_finite(&alpha) {
        return Err(Error::NonFiniteResult("alpha update"));
    }
    Ok(alpha)
}

/// `beta_j = -eps * LSE_i((alpha_i - C_ij) / eps + ln mu_i)`, written into `beta`.
///
/// Columns are read with stride `cols` from `cost`, or contiguously from
/// `transposed` when a transposed copy is supplied. Both paths evaluate the
/// same operands in the same order and give identical results.
pub fn update_beta_into<T: Real>(
    cost: &CostMatrix<T>,
    transposed: Option<&CostMatrix<T>>,
    mu: &DiscreteDistribution<T>,
    alpha: &[T],
    eps: T,
    plan: &ReductionPlan,
    beta: &mut [T],
) {
    let n = cost.rows();
    let m = cost.cols();
    let inv_eps = eps.recip();
    let log_mu = mu.log_weights();
    let values = cost.values();
    beta.par_iter_mut()
        .with_min_len(MIN_ROWS_PER_TASK)
        .enumerate()
        .for_each_init(
            || plan.scratch(),
            |scratch, (j, b)| {
                let lse = match transposed {
                    Some(ct) => {
                        let col = ct.row(j);
                        plan.log_sum_exp_with(scratch, n, |start, out| {
                            contiguous_operands(out, &alpha[start..], &col[start..], &log_mu[start..], inv_eps)
                        })
                    }
                    None => plan.log_sum_exp_with(scratch, n, |start, out| {
                        let col = values[start * m + j..].iter().step_by(m);
                        for (((o, &a), &c), &l) in out.iter_mut().zip(&alpha[start..]).zip(col).zip(&log_mu[start..]) {
                            *o = (a - c) * inv_eps + l;
                        }
                    }),
                };
                *b = -eps * lse;
            },
        );
}

/// Column update of the log-domain iteration, reading the cost with stride.
pub fn update_beta<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    alpha: &[T],
    eps: T,
    plan: &ReductionPlan,
) -> Result<Vec<T>> {
    check_len(cost.rows(), mu.len())?;
    check_len(cost.rows(), alpha.len())?;
    let mut beta = vec![T::zero(); cost.cols()];
    update_beta_into(cost, None, mu, alpha, eps, plan, &mut beta);
    if !all_finite(&beta) {
        return Err(Error::NonFiniteResult("beta update"));
    }
    Ok(beta)
}

fn row_marginal_deviations<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    potentials: &DualPotentials<T>,
    eps: T,
    plan: &ReductionPlan,
    out: &mut [T],
) {
    let m = cost.cols();
    let inv_eps = eps.recip();
    let (alpha, beta) = (&potentials.alpha, &potentials.beta);
    let (log_mu, log_nu, weights) = (mu.log_weights(), nu.log_weights(), mu.weights());
    out.par_iter_mut()
        .with_min_len(MIN_ROWS_PER_TASK)
        .enumerate()
        .for_each_init(
            || plan.scratch(),
            |scratch, (i, d)| {
                let row = cost.row(i);
                let a = alpha[i];
                let lse = plan.log_sum_exp_with(scratch, m, |start, out| {
                    let len = out.len();
                    let (b, c, l) = (&beta[start..start + len], &row[start..start + len], &log_nu[start..start + len]);
                    for k in 0..len {
                        out[k] = (a + b[k] - c[k]) * inv_eps + l[k];
                    }
                });
                *d = ((log_mu[i] + lse).exp() - weights[i]).abs();
            },
        );
}

/// L1 distance between the row marginal of the plan induced by `potentials`
/// and `mu`. Row marginals are evaluated in the log domain; a non-finite
/// result is returned as is.
pub fn marginal_error<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    potentials: &DualPotentials<T>,
    eps: T,
    plan: &ReductionPlan,
) -> Result<T> {
    check_dimensions(cost, mu, nu)?;
    check_len(cost.rows(), potentials.alpha.len())?;
    check_len(cost.cols(), potentials.beta.len())?;
    let mut scratch = vec![T::zero(); cost.rows()];
    Ok(marginal_error_with(cost, mu, nu, potentials, eps, plan, &mut scratch))
}

fn marginal_error_with<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    potentials: &DualPotentials<T>,
    eps: T,
    plan: &ReductionPlan,
    scratch: &mut [T],
) -> T {
    row_marginal_deviations(cost, mu, nu, potentials, eps, plan, scratch);
    plan.sum_by(scratch.len(), |i| scratch[i])
}

/// `sum_ij C_ij * pi_ij` for the plan induced by `potentials`.
pub fn transport_cost<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    potentials: &DualPotentials<T>,
    eps: T,
    plan: &ReductionPlan,
) -> Result<T> {
    check_dimensions(cost, mu, nu)?;
    check_len(cost.rows(), potentials.alpha.len())?;
    check_len(cost.cols(), potentials.beta.len())?;
    let m = cost.cols();
    let inv_eps = eps.recip();
    let (alpha, beta) = (&potentials.alpha, &potentials.beta);
    let (log_mu, log_nu) = (mu.log_weights(), nu.log_weights());
    let row_costs: Vec<T> = (0..cost.rows())
        .into_par_iter()
        .with_min_len(MIN_ROWS_PER_TASK)
        .map_init(
            || plan.scratch(),
            |scratch, i| {
                let row = cost.row(i);
                let (a, lm) = (alpha[i], log_mu[i]);
                plan.sum_with(scratch, m, |start, out| {
                    let len = out.len();
                    let (b, c, l) = (&beta[start..start + len], &row[start..start + len], &log_nu[start..start + len]);
                    for k in 0..len {
                        out[k] = c[k] * ((a + b[k] - c[k]) * inv_eps + lm + l[k]).exp_kernel();
                    }
                })
            },
        )
        .collect();
    let total = plan.sum_by(row_costs.len(), |i| row_costs[i]);
    if !total.is_finite() {
        return Err(Error::NonFiniteResult("transport cost"));
    }
    Ok(total)
}

/// Buffers owned by one solve.
#[derive(Debug)]
pub struct SolverWorkspace<T> {
    pub potentials: DualPotentials<T>,
    row_scratch: Vec<T>,
    transposed: Option<CostMatrix<T>>,
}

impl<T: Real> SolverWorkspace<T> {
    pub fn new(cost: &CostMatrix<T>, transpose_for_beta: bool) -> Self {
        Self {
            potentials: DualPotentials::zeros(cost.rows(), cost.cols()),
            row_scratch: vec![T::zero(); cost.rows()],
            transposed: transpose_for_beta.then(|| cost.transposed()),
        }
    }

    /// Extra bytes held for the transposed cost copy.
    pub fn transposed_bytes(&self) -> usize {
        self.transposed.as_ref().map_or(0, |c| c.storage_bytes())
    }
}

/// Runs the log-domain iteration in the precision of `T`.
///
/// Starting from zero potentials, each iteration updates alpha and then beta
/// from the fresh alpha. Every `check_interval` iterations (and on the last
/// permitted one) the row-marginal error is evaluated; the loop stops when it
/// drops below the tolerance, when a non-finite value appears, or after
/// `max_iterations`. `config.precision` is ignored here; see [`solve`].
pub fn run_log_domain<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    config: &SinkhornConfig,
) -> Result<Solution<T>> {
    config.validate()?;
    check_dimensions(cost, mu, nu)?;
    let plan = config.reduction_plan()?;
    let eps = T::of(config.epsilon);
    let tolerance = config.tolerance;

    let start = Instant::now();
    let mut ws = SolverWorkspace::new(cost, config.transpose_for_beta);
    let mut trace = Vec::new();
    let mut status = SolveStatus::NotConverged;
    let mut error = f64::INFINITY;
    let mut iterations = 0;

    for k in 1..=config.max_iterations {
        iterations = k;
        let DualPotentials { alpha, beta } = &mut ws.potentials;
        update_alpha_into(cost, nu, beta, eps, &plan, alpha);
        update_beta_into(cost, ws.transposed.as_ref(), mu, alpha, eps, &plan, beta);
        if !ws.potentials.is_finite() {
            status = SolveStatus::NumericalFailure;
            error = f64::NAN;
            break;
        }
        if k % config.check_interval == 0 || k == config.max_iterations {
            error = marginal_error_with(cost, mu, nu, &ws.potentials, eps, &plan, &mut ws.row_scratch)
                .widen();
            trace.push(TracePoint { iteration: k, error });
            if !error.is_finite() {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if error < tolerance {
                status = SolveStatus::Converged;
                break;
            }
        }
    }

    let mut transport = f64::NAN;
    if status != SolveStatus::NumericalFailure {
        match transport_cost(cost, mu, nu, &ws.potentials, eps, &plan) {
            Ok(c) => transport = c.widen(),
            Err(_) => status = SolveStatus::NumericalFailure,
        }
    }

    Ok(Solution {
        report: SolveReport {
            status,
            iterations,
            final_marginal_error: error,
            transport_cost: transport,
            error_trace: trace,
            precision: T::PRECISION,
            elapsed: start.elapsed(),
        },
        potentials: ws.potentials,
    })
}

/// Log-domain solve in the working precision named by `config.precision`.
/// Inputs are converted once; potentials are returned in double precision.
pub fn solve(
    cost: &CostMatrix<f64>,
    mu: &DiscreteDistribution<f64>,
    nu: &DiscreteDistribution<f64>,
    config: &SinkhornConfig,
) -> Result<Solution<f64>> {
    match config.precision {
        Precision::Double => run_log_domain(cost, mu, nu, config),
        Precision::Single => {
            let sol = run_log_domain::<f32>(&cost.cast(), &mu.cast()?, &nu.cast()?, config)?;
            Ok(Solution {
                report: sol.report,
                potentials: sol.potentials.cast(),
            })
        }
    }
}
