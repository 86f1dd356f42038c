//! Ground costs and the seeded problem generator used by the experiments.
//!
//! All randomness comes from [`seeded_rng`]: ChaCha8 (`rand_chacha`) seeded
//! through `SeedableRng::seed_from_u64`, which yields the same stream on every
//! platform.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{CostMatrix, DiscreteDistribution};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` points of dimension `dimension`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dimension: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dimension: usize, coords: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !coords.len().is_multiple_of(dimension) {
            return Err(Error::DimensionMismatch {
                expected: coords.len().next_multiple_of(dimension),
                actual: coords.len(),
            });
        }
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(Self { dimension, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dimension = points.first().map_or(0, |p| p.as_ref().len());
        let mut coords = Vec::with_capacity(points.len() * dimension);
        for p in points {
            let p = p.as_ref();
            if p.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dimension, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dimension)
    }

    /// Per-coordinate minimum and maximum.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dimension];
        let mut hi = vec![f64::NEG_INFINITY; self.dimension];
        for p in self.points() {
            for k in 0..self.dimension {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `C_ij = |x_i - y_j|^2`.
pub fn squared_euclidean_cost(x: &PointCloud, y: &PointCloud) -> Result<CostMatrix<f64>> {
    if x.dimension() != y.dimension() {
        return Err(Error::DimensionMismatch {
            expected: x.dimension(),
            actual: y.dimension(),
        });
    }
    CostMatrix::from_fn(x.len(), y.len(), |i, j| squared_distance(x.point(i), y.point(j)))
}

/// Result of [`normalize_cost`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCost {
    pub cost: CostMatrix<f64>,
    /// Set when the input was constant; `cost` is then all zeros.
    pub degenerate: bool,
}

/// Affine rescale with `min -> 0` and `max -> target_max`.
pub fn normalize_cost(cost: &CostMatrix<f64>, target_max: f64) -> Result<NormalizedCost> {
    if !(target_max > 0.0) || !target_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target_max must be positive and finite, got {target_max}"
        )));
    }
    let (min, range) = (cost.min_value(), cost.value_range());
    if range <= 0.0 {
        let zeros = vec![0.0; cost.values().len()];
        return Ok(NormalizedCost {
            cost: CostMatrix::new(cost.rows(), cost.cols(), zeros)?,
            degenerate: true,
        });
    }
    let values = cost
        .values()
        .iter()
        .map(|&c| (c - min) / range * target_max)
        .collect();
    Ok(NormalizedCost {
        cost: CostMatrix::new(cost.rows(), cost.cols(), values)?,
        degenerate: false,
    })
}

/// Benchmark problem on a uniform 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProblem {
    pub mu: DiscreteDistribution<f64>,
    pub nu: DiscreteDistribution<f64>,
    pub cost: CostMatrix<f64>,
}

fn grid(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![0.0];
    }
    let step = (len - 1) as f64;
    (0..len).map(|i| i as f64 / step).collect()
}

/// Two random distributions on the grids `i / (n - 1)` and `j / (m - 1)` with
/// squared Euclidean cost scaled to a maximum of 1. Weights are drawn from
/// `Open01` and normalized; `mu` is drawn before `nu` from one stream.
pub fn generate_grid_problem(n: usize, m: usize, seed: u64) -> Result<GridProblem> {
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = seeded_rng(seed);
    let mut draw = |len: usize| -> Result<DiscreteDistribution<f64>> {
        let raw: Vec<f64> = (0..len).map(|_| rng.sample(Open01)).collect();
        DiscreteDistribution::new(&raw)
    };
    let mu = draw(n)?;
    let nu = draw(m)?;
    let (xs, ys) = (grid(n), grid(m));
    let raw = CostMatrix::from_fn(n, m, |i, j| (xs[i] - ys[j]) * (xs[i] - ys[j]))?;
    let cost = normalize_cost(&raw, 1.0)?.cost;
    Ok(GridProblem { mu, nu, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn squared_euclidean_examples() {
        let x = PointCloud::from_points(&[[0.0]]).unwrap();
        let y = PointCloud::from_points(&[[2.0]]).unwrap();
        assert_eq!(squared_euclidean_cost(&x, &y).unwrap().values(), &[4.0]);

        let x = PointCloud::from_points(&[[0.0, 0.0]]).unwrap();
        let y = PointCloud::from_points(&[[3.0, 4.0]]).unwrap();
        assert_eq!(squared_euclidean_cost(&x, &y).unwrap().values(), &[25.0]);

        let z = PointCloud::from_points(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            squared_euclidean_cost(&x, &z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn point_cloud_validation() {
        assert!(PointCloud::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(PointCloud::new(0, vec![]).is_err());
        assert!(PointCloud::new(1, vec![f64::NAN]).is_err());
        assert!(PointCloud::from_points(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let c = PointCloud::from_points(&[[0.0, 5.0], [2.0, -1.0]]).unwrap();
        assert_eq!(c.bounds(), (vec![0.0, -1.0], vec![2.0, 5.0]));
    }

    #[test]
    fn normalize_examples() {
        let c = CostMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = normalize_cost(&c, 10.0).unwrap();
        assert!(!out.degenerate);
        assert_eq!(out.cost.values(), &[0.0, 10.0, 10.0, 0.0]);

        let c = CostMatrix::new(1, 2, vec![2.0, 4.0]).unwrap();
        assert_eq!(normalize_cost(&c, 1.0).unwrap().cost.values(), &[0.0, 1.0]);

        let c = CostMatrix::new(1, 2, vec![3.0, 3.0]).unwrap();
        let out = normalize_cost(&c, 1.0).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.cost.values(), &[0.0, 0.0]);

        assert!(normalize_cost(&c, 0.0).is_err());
    }

    #[test]
    fn grid_endpoints() {
        for seed in [0, 1, 99] {
            let p = generate_grid_problem(2, 2, seed).unwrap();
            assert_eq!(p.cost.values(), &[0.0, 1.0, 1.0, 0.0]);
        }
        let p = generate_grid_problem(1, 3, 0).unwrap();
        assert_eq!(p.cost.values(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn grid_problem_is_seed_deterministic() {
        let a = generate_grid_problem(64, 48, 5).unwrap();
        let b = generate_grid_problem(64, 48, 5).unwrap();
        let bits = |d: &DiscreteDistribution<f64>| -> Vec<u64> {
            d.weights().iter().map(|w| w.to_bits()).collect()
        };
        assert_eq!(bits(&a.mu), bits(&b.mu));
        assert_eq!(bits(&a.nu), bits(&b.nu));
        assert_eq!(a.cost, b.cost);
        let c = generate_grid_problem(64, 48, 6).unwrap();
        assert_ne!(bits(&a.mu), bits(&c.mu));
    }

    proptest! {
        #[test]
        fn self_cost_is_symmetric_with_zero_diagonal(
            coords in prop::collection::vec(-10.0f64..10.0, 3..60)
        ) {
            let n = coords.len() / 3;
            let x = PointCloud::new(3, coords[..n * 3].to_vec()).unwrap();
            let c = squared_euclidean_cost(&x, &x).unwrap();
            for i in 0..n {
                prop_assert_eq!(c.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                }
            }
        }

        #[test]
        fn normalized_range(values in prop::collection::vec(0.0f64..1e3, 2..100), target in 1e-3f64..1e3) {
            let c = CostMatrix::new(1, values.len(), values).unwrap();
            prop_assume!(c.value_range() > 0.0);
            let out = normalize_cost(&c, target).unwrap();
            prop_assert_eq!(out.cost.min_value(), 0.0);
            let max = out.cost.max_value();
            prop_assert!((max - target).abs() <= 4.0 * f64::EPSILON * target);
        }
    }
}
