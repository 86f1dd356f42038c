use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::types::{CostMatrix, DiscreteDistribution, DualPotentials, TransportPlan};

use super::{check_dimensions, check_len};

/// Dense plan `pi_ij = mu_i nu_j exp((alpha_i + beta_j - C_ij) / eps)`,
/// evaluated as a single exponential of the log-domain sum.
///
/// Entries whose logarithm lies below the underflow threshold of `T` are
/// stored as exact zeros.
pub fn materialize_plan<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    potentials: &DualPotentials<T>,
    eps: T,
) -> Result<TransportPlan<T>> {
    check_dimensions(cost, mu, nu)?;
    check_len(cost.rows(), potentials.alpha.len())?;
    check_len(cost.cols(), potentials.beta.len())?;
    let m = cost.cols();
    let inv_eps = eps.recip();
    let (alpha, beta) = (&potentials.alpha, &potentials.beta);
    let (log_mu, log_nu) = (mu.log_weights(), nu.log_weights());
    let mut values = vec![T::zero(); cost.rows() * m];
    values
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(i, out)| {
            let row = cost.row(i);
            for (j, v) in out.iter_mut().enumerate() {
                *v = ((alpha[i] + beta[j] - row[j]) * inv_eps + log_mu[i] + log_nu[j]).exp_kernel();
            }
        });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult("transport plan"));
    }
    TransportPlan::new(cost.rows(), m, values)
}

/// Stationarity residual `max_ij |C_ij + eps ln(pi_ij / (mu_i nu_j)) - alpha_i - beta_j|`,
/// evaluated in double precision.
///
/// Only entries holding a normal (non-zero, non-subnormal) value of `T` take
/// part: an entry that underflowed no longer carries its logarithm. Returns
/// `0` when no entry qualifies.
pub fn kkt_residual<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    plan: &TransportPlan<T>,
    potentials: &DualPotentials<T>,
    eps: f64,
) -> f64 {
    let m = cost.cols();
    let log_mu: Vec<f64> = mu.weights().iter().map(|w| w.widen().ln()).collect();
    let log_nu: Vec<f64> = nu.weights().iter().map(|w| w.widen().ln()).collect();
    (0..cost.rows())
        .map(|i| {
            let a = potentials.alpha[i].widen();
            (0..m)
                .filter(|&j| plan.get(i, j) >= T::min_positive_value())
                .map(|j| {
                    let log_ratio = plan.get(i, j).widen().ln() - log_mu[i] - log_nu[j];
                    (cost.get(i, j).widen() + eps * log_ratio - a - potentials.beta[j].widen())
                        .abs()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// `<C, pi> + eps * KL(pi || mu nu^T)` with
/// `KL = sum pi (ln(pi / (mu nu)) - 1) + 1`; zero entries contribute `0 ln 0 = 0`.
pub fn regularized_objective<T: Real>(
    cost: &CostMatrix<T>,
    mu: &DiscreteDistribution<T>,
    nu: &DiscreteDistribution<T>,
    plan: &TransportPlan<T>,
    eps: f64,
) -> f64 {
    let mut linear = 0.0;
    let mut entropy = 0.0;
    for i in 0..cost.rows() {
        let log_mu = mu.weights()[i].widen().ln();
        for j in 0..cost.cols() {
            let p = plan.get(i, j).widen();
            linear += cost.get(i, j).widen() * p;
            if p > 0.0 {
                entropy += p * (p.ln() - log_mu - nu.weights()[j].widen().ln() - 1.0);
            }
        }
    }
    linear + eps * (entropy + 1.0)
}

/// Two published forms of the Sinkhorn contraction factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionBounds {
    /// `exp(-2 R / eps)`
    pub exponential: f64,
    /// Birkhoff coefficient `tanh(R / (4 eps))^2`
    pub birkhoff: f64,
}

/// Contraction factors for cost range `range` and regularization `eps`.
/// Diagnostic only: the two forms disagree as `eps -> 0`.
pub fn contraction_rate_bound(range: f64, eps: f64) -> Result<ContractionBounds> {
    if !(range >= 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need range >= 0 and eps > 0, got range={range}, eps={eps}"
        )));
    }
    Ok(ContractionBounds {
        exponential: (-2.0 * range / eps).exp(),
        birkhoff: (range / (4.0 * eps)).tanh().powi(2),
    })
}
