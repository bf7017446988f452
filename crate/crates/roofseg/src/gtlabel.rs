//! Supervision labels derived from ground-truth instances.
//!
//! A roof point is a *boundary* point when its k-nearest neighborhood among
//! roof points (the query point itself excluded, non-roof points excluded
//! from the graph entirely so clutter cannot flip labels) contains at least
//! one point of a different instance; otherwise it is a *plane* point. Every
//! roof point also gets the vector from it to its instance centroid, which
//! is the shift target the offset head trains toward.

use nalgebra::{Point3, Vector3};

use crate::cloud::{PointCloud, Semantic};
use crate::error::{Error, Result};
use crate::geom::SpatialIndex;

/// Per-point supervision parallel to the cloud's point array.
#[derive(Debug, Clone)]
pub struct LabelSet {
    pub semantic: Vec<Semantic>,
    /// Vector to the instance centroid; zero for non-roof points.
    pub offset: Vec<Vector3<f64>>,
    pub instance_id: Vec<i64>,
}

impl LabelSet {
    /// Store the semantic labels into the cloud's ground truth.
    pub fn apply_semantics(&self, cloud: &mut PointCloud) {
        if let Some(gt) = cloud.gt.as_mut() {
            gt.semantics = Some(self.semantic.clone());
        }
    }
}

/// Instance centroids indexed by instance id.
#[derive(Debug, Clone)]
pub struct InstanceCenters {
    pub centers: Vec<Point3<f64>>,
}

/// Arithmetic mean of each instance's points. Ids must be contiguous from 0;
/// an id with no points is reported as [`Error::EmptyInstance`].
pub fn instance_centers(points: &[Point3<f64>], instance_ids: &[i64]) -> Result<InstanceCenters> {
    if points.len() != instance_ids.len() {
        return Err(Error::length_mismatch(
            "points vs instance ids",
            points.len(),
            instance_ids.len(),
        ));
    }
    let count = instance_ids
        .iter()
        .copied()
        .max()
        .map_or(0, |m| (m + 1).max(0) as usize);
    let mut sums = vec![Vector3::<f64>::zeros(); count];
    let mut sizes = vec![0usize; count];
    for (p, &id) in points.iter().zip(instance_ids) {
        if id >= 0 {
            sums[id as usize] += p.coords;
            sizes[id as usize] += 1;
        }
    }
    let mut centers = Vec::with_capacity(count);
    for (id, (sum, size)) in sums.into_iter().zip(sizes).enumerate() {
        if size == 0 {
            return Err(Error::EmptyInstance(id as i64));
        }
        centers.push(Point3::from(sum / size as f64));
    }
    Ok(InstanceCenters { centers })
}

/// Derive semantic classes and offset-to-center vectors from ground truth.
///
/// `k_boundary` is the neighborhood size for the boundary test; neighbors
/// are the k nearest *other* roof points.
pub fn derive_labels(cloud: &PointCloud, k_boundary: usize) -> Result<LabelSet> {
    let gt = cloud.require_gt()?;
    if gt.instance_ids.len() != cloud.len() {
        return Err(Error::length_mismatch(
            "points vs instance ids",
            cloud.len(),
            gt.instance_ids.len(),
        ));
    }
    if k_boundary < 2 {
        return Err(Error::InvalidSpec(format!(
            "k_boundary must be at least 2, got {k_boundary}"
        )));
    }

    let roof: Vec<usize> = (0..cloud.len())
        .filter(|&i| gt.instance_ids[i] >= 0)
        .collect();
    let roof_points: Vec<Point3<f64>> = roof.iter().map(|&i| cloud.points[i]).collect();
    let roof_ids: Vec<i64> = roof.iter().map(|&i| gt.instance_ids[i]).collect();
    let centers = instance_centers(&roof_points, &roof_ids)?;

    let mut semantic = vec![Semantic::NonRoof; cloud.len()];
    let mut offset = vec![Vector3::zeros(); cloud.len()];
    let index = SpatialIndex::build(&roof_points);
    for (local, &global) in roof.iter().enumerate() {
        let id = roof_ids[local];
        // Ask for one extra neighbor so dropping the query point still
        // leaves k candidates.
        let mut mixed = false;
        let mut taken = 0;
        for n in index.knn(&roof_points[local], k_boundary + 1) {
            if n == local {
                continue;
            }
            if taken == k_boundary {
                break;
            }
            taken += 1;
            if roof_ids[n] != id {
                mixed = true;
                break;
            }
        }
        semantic[global] = if mixed { Semantic::Boundary } else { Semantic::Plane };
        offset[global] = centers.centers[id as usize] - cloud.points[global];
    }

    Ok(LabelSet {
        semantic,
        offset,
        instance_id: gt.instance_ids.clone(),
    })
}
