//! Domain types shared by the solver, the cost builders and the applications.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{Precision, Real};
use crate::reduction::ReductionPlan;

/// Maximum allowed deviation of normalized weights from unit mass.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A strictly positive probability vector together with its log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T = f64> {
    weights: Vec<T>,
    log_weights: Vec<T>,
}

impl<T: Real> DiscreteDistribution<T> {
    /// Normalizes `raw` onto the simplex.
    ///
    /// Every normalized weight must be strictly positive: the log-domain
    /// updates add `ln w`, so zero mass is rejected here rather than carried
    /// as `-inf` through the reductions.
    pub fn new(raw: &[T]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = raw.iter().position(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::NonFiniteInput { index });
        }
        let total = raw.iter().fold(T::zero(), |acc, &w| acc + w);
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::ZeroWeight { index: 0 });
        }
        let weights: Vec<T> = raw.iter().map(|&w| w / total).collect();
        Self::from_normalized(weights)
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        Self::from_normalized(vec![T::one() / T::of(len as f64); len])
    }

    fn from_normalized(weights: Vec<T>) -> Result<Self> {
        if let Some(index) = weights.iter().position(|&w| w <= T::zero()) {
            return Err(Error::ZeroWeight { index });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    /// Converts to another working precision. Log-weights are recomputed from
    /// the converted weights.
    pub fn cast<U: Real>(&self) -> Result<DiscreteDistribution<U>> {
        DiscreteDistribution::from_normalized(self.weights.iter().map(|w| U::of(w.widen())).collect())
    }
}

/// Dense row-major `rows x cols` matrix of nonnegative transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T = f64> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    min: T,
    max: T,
}

impl<T: Real> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        let mut min = T::infinity();
        let mut max = T::neg_infinity();
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::NegativeOrNonFiniteEntry {
                    index,
                    value: v.widen(),
                });
            }
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self {
            rows,
            cols,
            values,
            min,
            max,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let values = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn min_value(&self) -> T {
        self.min
    }

    pub fn max_value(&self) -> T {
        self.max
    }

    /// `max C - min C`, the cost range entering the contraction bounds.
    pub fn value_range(&self) -> T {
        self.max - self.min
    }

    pub fn transposed(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            values.extend((0..self.rows).map(|i| self.get(i, j)));
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
            min: self.min,
            max: self.max,
        }
    }

    pub fn cast<U: Real>(&self) -> CostMatrix<U> {
        let values: Vec<U> = self.values.iter().map(|v| U::of(v.widen())).collect();
        let min = values.iter().fold(U::infinity(), |a, &b| a.min(b));
        let max = values.iter().fold(U::neg_infinity(), |a, &b| a.max(b));
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
            min,
            max,
        }
    }

    /// Bytes held by the dense value array.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<T>()
    }
}

/// Sinkhorn dual vectors: `alpha` for rows, `beta` for columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials<T = f64> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> DualPotentials<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            alpha: vec![T::zero(); rows],
            beta: vec![T::zero(); cols],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(&self.beta).all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> DualPotentials<U> {
        DualPotentials {
            alpha: self.alpha.iter().map(|v| U::of(v.widen())).collect(),
            beta: self.beta.iter().map(|v| U::of(v.widen())).collect(),
        }
    }
}

/// Parameters of a Sinkhorn solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub check_interval: usize,
    pub chunk_width: usize,
    pub group_size: usize,
    pub transpose_for_beta: bool,
    pub precision: Precision,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            tolerance: 1e-6,
            max_iterations: 10_000,
            check_interval: 10,
            chunk_width: 32,
            group_size: 256,
            transpose_for_beta: false,
            precision: Precision::Single,
        }
    }
}

impl SinkhornConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_check_interval(mut self, check_interval: usize) -> Self {
        self.check_interval = check_interval;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_reduction(mut self, plan: ReductionPlan) -> Self {
        self.chunk_width = plan.chunk_width();
        self.group_size = plan.group_size();
        self
    }

    pub fn with_transpose_for_beta(mut self, on: bool) -> Self {
        self.transpose_for_beta = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.check_interval == 0 {
            return Err(Error::InvalidConfig("check_interval must be at least 1".into()));
        }
        ReductionPlan::new(self.chunk_width, self.group_size)?;
        Ok(())
    }

    pub fn reduction_plan(&self) -> Result<ReductionPlan> {
        ReductionPlan::new(self.chunk_width, self.group_size)
    }
}

/// Dense coupling between the row and column distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T = f64> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> TransportPlan<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    /// Row sums accumulated in double precision.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.widen()).sum())
            .collect()
    }

    /// Column sums accumulated in double precision.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v.widen();
            }
        }
        sums
    }

    /// L1 distances of the row and column sums from `mu` and `nu`.
    pub fn marginal_errors(
        &self,
        mu: &DiscreteDistribution<T>,
        nu: &DiscreteDistribution<T>,
    ) -> (f64, f64) {
        let l1 = |sums: Vec<f64>, target: &[T]| -> f64 {
            sums.iter()
                .zip(target)
                .map(|(s, t)| (s - t.widen()).abs())
                .sum()
        };
        (
            l1(self.row_sums(), mu.weights()),
            l1(self.col_sums(), nu.weights()),
        )
    }

    pub fn cast<U: Real>(&self) -> TransportPlan<U> {
        TransportPlan {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::of(v.widen())).collect(),
        }
    }
}

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
    NumericalFailure,
}

impl SolveStatus {
    /// Label used in experiment output: `converged`, `diverged` or `nan`.
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::NotConverged => "diverged",
            SolveStatus::NumericalFailure => "nan",
        }
    }
}

/// One convergence check: iteration index and L1 row-marginal error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_marginal_error: f64,
    pub transport_cost: f64,
    pub error_trace: Vec<TracePoint>,
    pub precision: Precision,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Number of marginal-error evaluations performed.
    pub fn marginal_checks(&self) -> usize {
        self.error_trace.len()
    }

    /// Bitwise equality of every numeric field except wall time.
    pub fn same_numerics(&self, other: &SolveReport) -> bool {
        self.status == other.status
            && self.iterations == other.iterations
            && self.final_marginal_error.to_bits() == other.final_marginal_error.to_bits()
            && self.transport_cost.to_bits() == other.transport_cost.to_bits()
            && self.error_trace.len() == other.error_trace.len()
            && self
                .error_trace
                .iter()
                .zip(&other.error_trace)
                .all(|(a, b)| a.iteration == b.iteration && a.error.to_bits() == b.error.to_bits())
    }
}
