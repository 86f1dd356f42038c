use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::costs::{seeded_rng, squared_euclidean_cost, PointCloud};
use crate::error::{Error, Result};
use crate::solver::{materialize_plan, solve};
use crate::types::{DiscreteDistribution, SinkhornConfig, SolveReport, SolveStatus};

/// Source point `source_index` matched to `target_index` carrying plan mass `weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Matching {
    pub correspondences: Vec<Correspondence>,
    pub report: SolveReport,
}

/// For every source point, the target with the largest plan entry (lowest
/// index on ties) under uniform weights and squared Euclidean cost.
pub fn match_point_clouds(x: &PointCloud, y: &PointCloud, config: &SinkhornConfig) -> Result<Matching> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cost = squared_euclidean_cost(x, y)?;
    let mu = DiscreteDistribution::uniform(x.len())?;
    let nu = DiscreteDistribution::uniform(y.len())?;
    let solution = solve(&cost, &mu, &nu, config)?;
    if solution.report.status == SolveStatus::NumericalFailure {
        return Err(Error::NumericalFailure);
    }
    let plan = materialize_plan(&cost, &mu, &nu, &solution.potentials, config.epsilon)?;
    let correspondences = (0..plan.rows())
        .map(|i| {
            let (j, w) = plan
                .row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &w)| if w > best.1 { (j, w) } else { best });
            Correspondence {
                source_index: i,
                target_index: j,
                weight: w,
            }
        })
        .collect();
    Ok(Matching {
        correspondences,
        report: solution.report,
    })
}

/// Fraction of correspondences with `target_index == permutation[source_index]`.
pub fn matching_accuracy(correspondences: &[Correspondence], permutation: &[usize]) -> f64 {
    if correspondences.is_empty() {
        return 0.0;
    }
    let hits = correspondences
        .iter()
        .filter(|c| permutation.get(c.source_index) == Some(&c.target_index))
        .count();
    hits as f64 / correspondences.len() as f64
}

/// Source cloud, its shuffled rigid image, and `permutation[i]`: the target
/// index of the image of source point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidPair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub permutation: Vec<usize>,
}

fn rotate(p: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = p.to_vec();
    out[0] = c * p[0] - s * p[1];
    out[1] = s * p[0] + c * p[1];
    out
}

/// Points uniform in the unit cube (square for `dimension = 2`), mapped by a
/// rotation about the z axis, a translation and isotropic Gaussian noise, then
/// shuffled. Draw order from the seeded stream: coordinates, noise, shuffle.
pub fn generate_rigid_pair(
    n: usize,
    dimension: usize,
    rotation_angle: f64,
    translation: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<RigidPair> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if dimension != 2 && dimension != 3 {
        return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dimension}")));
    }
    if translation.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            actual: translation.len(),
        });
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|_| Error::InvalidArgument(format!("bad noise sigma {noise_sigma}")))?;
    let mut rng = seeded_rng(seed);
    let coords: Vec<f64> = (0..n * dimension).map(|_| rng.random::<f64>()).collect();
    let source = PointCloud::new(dimension, coords)?;
    let moved: Vec<Vec<f64>> = source
        .points()
        .map(|p| {
            rotate(p, rotation_angle)
                .iter()
                .zip(translation)
                .map(|(x, t)| x + t + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut permutation = vec![0; n];
    let mut target = Vec::with_capacity(n * dimension);
    for (k, &i) in order.iter().enumerate() {
        permutation[i] = k;
        target.extend_from_slice(&moved[i]);
    }
    Ok(RigidPair {
        source,
        target: PointCloud::new(dimension, target)?,
        permutation,
    })
}

/// Whitespace-separated coordinates, one point per line; blank lines and lines
/// starting with `#` are skipped.
pub fn read_point_cloud<R: BufRead>(reader: R) -> Result<PointCloud> {
    let mut dimension = None;
    let mut coords = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        match dimension {
            None => dimension = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse(format!(
                    "line {}: expected {d} columns, found {}",
                    lineno + 1,
                    values.len()
                )))
            }
            Some(_) => {}
        }
        coords.extend(values);
    }
    let dimension = dimension.ok_or(Error::EmptyInput)?;
    PointCloud::new(dimension, coords)
}

pub fn write_point_cloud<W: Write>(mut writer: W, cloud: &PointCloud) -> Result<()> {
    for p in cloud.points() {
        let line: Vec<String> = p.iter().map(|c| format!("{c:e}")).collect();
        writeln!(writer, "{}", line.join(" "))?;
    }
    writer.flush()?;
    Ok(())
}

/// One `i j weight` line per correspondence.
pub fn write_correspondences<W: Write>(mut writer: W, correspondences: &[Correspondence]) -> Result<()> {
    for c in correspondences {
        writeln!(writer, "{} {} {:e}", c.source_index, c.target_index, c.weight)?;
    }
    writer.flush()?;
    Ok(())
}
