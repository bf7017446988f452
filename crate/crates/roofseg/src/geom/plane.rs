//! Plane model and total-least-squares fitting.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

use super::SpatialIndex;

/// Relative eigenvalue threshold below which a covariance direction counts as
/// collapsed. The middle eigenvalue of a collinear set is zero up to rounding;
/// anything within this factor of the largest eigenvalue is treated the same.
const DEGENERACY_RATIO: f64 = 1e-10;

/// An infinite plane `{ q : normal . q + offset = 0 }` with a unit normal and
/// the root-mean-square orthogonal residual of the points it was fitted to.
///
/// The normal's sign is fixed lexicographically: positive z component, with
/// ties broken by positive y, then positive x.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub rms_residual: f64,
}

impl PlaneModel {
    /// Plane through `point` with the given (not necessarily unit) normal.
    /// Returns `None` for a zero or non-finite normal.
    pub fn from_point_normal(point: &Point3<f64>, normal: &Vector3<f64>) -> Option<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        let mut n = normal / norm;
        fix_normal_sign(&mut n);
        Some(PlaneModel {
            normal: n,
            offset: -n.dot(&point.coords),
            rms_residual: 0.0,
        })
    }

    /// Signed distance; positive on the side the normal points to.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    /// Absolute orthogonal distance from `p` to the plane.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }

    /// The plane expressed in coordinates `q' = (q - translation) / scale`.
    pub fn translated_scaled(&self, translation: &Vector3<f64>, scale: f64) -> PlaneModel {
        PlaneModel {
            normal: self.normal,
            offset: (self.normal.dot(translation) + self.offset) / scale,
            rms_residual: self.rms_residual / scale,
        }
    }

    /// Inverse of [`PlaneModel::translated_scaled`].
    pub fn denormalized(&self, translation: &Vector3<f64>, scale: f64) -> PlaneModel {
        PlaneModel {
            normal: self.normal,
            offset: self.offset * scale - self.normal.dot(translation),
            rms_residual: self.rms_residual * scale,
        }
    }
}

/// Absolute orthogonal distance from `p` to `plane`.
pub fn point_plane_distance(p: &Point3<f64>, plane: &PlaneModel) -> f64 {
    plane.distance(p)
}

fn fix_normal_sign(n: &mut Vector3<f64>) {
    let flip = if n.z != 0.0 {
        n.z < 0.0
    } else if n.y != 0.0 {
        n.y < 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        *n = -*n;
    }
    // Canonicalize -0.0 components so equal planes compare equal.
    for c in n.iter_mut() {
        if *c == 0.0 {
            *c = 0.0;
        }
    }
}

/// Fit a plane to `points` by total least squares: the normal is the
/// eigenvector of the covariance matrix with the smallest eigenvalue, and the
/// plane passes through the centroid.
///
/// Errors with [`Error::DegenerateInput`] when fewer than three points are
/// given or when the points are (near-)collinear, in which case no unique
/// plane exists.
pub fn fit_plane(points: &[Point3<f64>]) -> Result<PlaneModel> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid: Vector3<f64> = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eigen = cov.symmetric_eigen();
    // Sort eigenpairs ascending by eigenvalue.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let lambda_min = eigen.eigenvalues[order[0]].max(0.0);
    let lambda_mid = eigen.eigenvalues[order[1]].max(0.0);
    let lambda_max = eigen.eigenvalues[order[2]].max(0.0);

    if lambda_max <= 0.0 || lambda_mid <= lambda_max * DEGENERACY_RATIO {
        return Err(Error::DegenerateInput(
            "points are coincident or collinear".to_string(),
        ));
    }
    let _ = lambda_min;

    let mut normal: Vector3<f64> = eigen.eigenvectors.column(order[0]).into();
    normal.normalize_mut();
    fix_normal_sign(&mut normal);
    let offset = -normal.dot(&centroid);

    let ssd: f64 = points
        .iter()
        .map(|p| {
            let d = normal.dot(&p.coords) + offset;
            d * d
        })
        .sum();
    Ok(PlaneModel {
        normal,
        offset,
        rms_residual: (ssd / n).sqrt(),
    })
}

/// Plane fit of each point's local neighborhood (the point plus its `k`
/// nearest neighbors). `None` marks neighborhoods too degenerate to fit.
pub fn local_plane_fits(points: &[Point3<f64>], k: usize) -> Vec<Option<PlaneModel>> {
    let index = SpatialIndex::build(points);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut nbhd: Vec<Point3<f64>> = index
                .knn(p, k + 1)
                .into_iter()
                .filter(|&j| j != i)
                .take(k)
                .map(|j| points[j])
                .collect();
            nbhd.push(*p);
            fit_plane(&nbhd).ok()
        })
        .collect()
}

/// Per-point unit normals from local plane fits over `k`-neighborhoods.
/// Degenerate neighborhoods yield the zero vector so callers can skip them.
pub fn estimate_normals(points: &[Point3<f64>], k: usize) -> Vec<Vector3<f64>> {
    local_plane_fits(points, k)
        .into_iter()
        .map(|fit| fit.map_or_else(Vector3::zeros, |pl| pl.normal))
        .collect()
}
