//! Demonstration pipelines built on the solver: color transfer between images
//! and correspondence search between point clouds.

mod image;
mod matching;

pub use image::{color_transfer, read_ppm, write_ppm, ColorTransfer, RgbImage};
pub use matching::{
    generate_rigid_pair, match_point_clouds, matching_accuracy, read_point_cloud,
    write_correspondences, write_point_cloud, Correspondence, Matching, RigidPair,
};

use crate::costs::PointCloud;
use crate::error::{Error, Result};
use crate::types::TransportPlan;

/// Replaces source point `i` by `sum_j pi_ij y_j / sum_j pi_ij`.
pub fn barycentric_map(plan: &TransportPlan<f64>, targets: &PointCloud) -> Result<PointCloud> {
    if plan.cols() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.cols(),
            actual: targets.len(),
        });
    }
    let d = targets.dimension();
    let mut coords = vec![0.0; plan.rows() * d];
    for (i, out) in coords.chunks_mut(d).enumerate() {
        let row = plan.row(i);
        let mass: f64 = row.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::ZeroRowMass { row: i });
        }
        for (&w, y) in row.iter().zip(targets.points()) {
            for (o, &c) in out.iter_mut().zip(y) {
                *o += w * c;
            }
        }
        for o in out.iter_mut() {
            *o /= mass;
        }
    }
    PointCloud::new(d, coords)
}
