//! Entropic optimal transport with a log-domain Sinkhorn solver.
//!
//! The solver alternates the dual updates
//!
//! ```text
//! alpha_i = -eps * LSE_j((beta_j  - C_ij) / eps + ln nu_j)
//! beta_j  = -eps * LSE_i((alpha_i - C_ij) / eps + ln mu_i)
//! ```
//!
//! where every LogSumExp is max-shifted, so no Gibbs kernel is ever formed.
//! Reductions follow a fixed two-level tree ([`reduction::ReductionPlan`]),
//! which makes every result independent of the worker count.
//!
//! ```
//! use sinkhorn_core::{generate_grid_problem, solve, Precision, SinkhornConfig};
//!
//! let problem = generate_grid_problem(64, 64, 0).unwrap();
//! let config = SinkhornConfig::new(0.1).with_precision(Precision::Double);
//! let solution = solve(&problem.cost, &problem.mu, &problem.nu, &config).unwrap();
//! assert!(solution.report.converged());
//! ```

pub mod applications;
pub mod costs;
pub mod error;
pub mod real;
pub mod reduction;
pub mod solver;
pub mod types;

pub use costs::{
    generate_grid_problem, normalize_cost, seeded_rng, squared_euclidean_cost, GridProblem,
    NormalizedCost, PointCloud,
};
pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use reduction::{log_sum_exp, reduce_max, reduce_sum, ReductionPlan, StridedView};
pub use solver::{
    contraction_rate_bound, kkt_residual, marginal_error, materialize_plan, regularized_objective,
    run_log_domain, run_standard_domain, solve, solve_standard_domain, transport_cost,
    update_alpha, update_beta, ContractionBounds, Solution, StandardSolution,
};
pub use types::{
    CostMatrix, DiscreteDistribution, DualPotentials, SinkhornConfig, SolveReport, SolveStatus,
    TracePoint, TransportPlan,
};
