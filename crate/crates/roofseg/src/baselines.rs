//! Classical plane-segmentation comparators: sequential RANSAC extraction
//! and normal-based region growing.
//!
//! Both are faithful-in-spirit reimplementations of the standard
//! algorithms, present so the comparison harness can reproduce the
//! *ordering* against the joint-space method, not any particular absolute
//! score. Both work on raw coordinates only (no learned features), are
//! deterministic given their parameters, and emit the same
//! [`Segmentation`] type as the main pipeline.

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::cluster::Segmentation;
use crate::error::{Error, Result};
use crate::geom::{fit_plane, local_plane_fits, point_plane_distance, PlaneModel, SpatialIndex};

/// Sequential RANSAC extraction parameters.
///
/// Defaults assume a unit-radius normalized cloud.
#[derive(Debug, Clone)]
pub struct RansacParams {
    /// Inlier band half-width around a candidate plane.
    pub dist_thresh: f64,
    /// Planes keeping fewer inliers than this are not extracted.
    pub min_points: usize,
    /// Random 3-point hypotheses tried per extracted plane.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            dist_thresh: 0.02,
            min_points: 100,
            iterations: 256,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dist_thresh > 0.0) || !self.dist_thresh.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "RANSAC dist_thresh must be positive, got {}",
                self.dist_thresh
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidSpec("RANSAC needs at least 1 iteration".into()));
        }
        if self.min_points < 3 {
            return Err(Error::InvalidSpec(
                "RANSAC min_points must be at least 3 (a plane)".into(),
            ));
        }
        Ok(())
    }
}

/// Region-growing parameters. Defaults assume a unit-radius cloud.
#[derive(Debug, Clone)]
pub struct RegionGrowParams {
    /// Maximum angle, in degrees, between a point's normal and the grown
    /// region's plane normal.
    pub angle_thresh: f64,
    /// Maximum distance from the grown region's plane.
    pub dist_thresh: f64,
    /// Neighborhood size for normals and the adjacency graph.
    pub k: usize,
    /// Regions smaller than this dissolve into the unassigned set.
    pub min_points: usize,
}

impl Default for RegionGrowParams {
    fn default() -> Self {
        RegionGrowParams {
            angle_thresh: 15.0,
            dist_thresh: 0.05,
            k: 16,
            min_points: 100,
        }
    }
}

impl RegionGrowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_thresh > 0.0 && self.angle_thresh < 90.0) {
            return Err(Error::InvalidSpec(format!(
                "region-growing angle_thresh must lie in (0, 90) degrees, got {}",
                self.angle_thresh
            )));
        }
        if !(self.dist_thresh > 0.0) || !self.dist_thresh.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "region-growing dist_thresh must be positive, got {}",
                self.dist_thresh
            )));
        }
        if self.k < 3 {
            return Err(Error::InvalidSpec(
                "region-growing k must be at least 3".into(),
            ));
        }
        if self.min_points < 1 {
            return Err(Error::InvalidSpec(
                "region-growing min_points must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Indices from `candidates` within `dist_thresh` of the plane, ascending.
fn plane_inliers(
    points: &[Point3<f64>],
    candidates: &[usize],
    plane: &PlaneModel,
    dist_thresh: f64,
) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| point_plane_distance(&points[i], plane) < dist_thresh)
        .collect()
}

/// Plane through three points, or None when they are (near-)collinear.
fn plane_from_triplet(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Option<PlaneModel> {
    let normal = (b - a).cross(&(c - a));
    let scale = (b - a).norm().max((c - a).norm());
    if scale <= 0.0 || normal.norm() <= 1e-12 * scale * scale {
        return None;
    }
    PlaneModel::from_point_normal(a, &normal)
}

/// Sequential RANSAC: repeatedly hypothesize planes from random point
/// triplets, extract the best-supported plane's inliers (after one
/// least-squares refit) as a cluster, and continue on the remainder until
/// no plane retains `min_points` supporters.
pub fn ransac_segment(cloud: &PointCloud, params: &RansacParams) -> Result<Segmentation> {
    params.validate()?;
    let points = &cloud.points;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    while remaining.len() >= params.min_points {
        let mut best: Option<Vec<usize>> = None;
        for _ in 0..params.iterations {
            let pick = sample(&mut rng, remaining.len(), 3);
            let (a, b, c) = (
                remaining[pick.index(0)],
                remaining[pick.index(1)],
                remaining[pick.index(2)],
            );
            let Some(plane) = plane_from_triplet(&points[a], &points[b], &points[c]) else {
                continue;
            };
            let inliers = plane_inliers(points, &remaining, &plane, params.dist_thresh);
            if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
                best = Some(inliers);
            }
        }
        let Some(rough) = best else { break };
        if rough.len() < params.min_points {
            break;
        }
        // One least-squares refit over the rough consensus, then re-extract
        // the final inlier set against the refined plane.
        let member_points: Vec<Point3<f64>> = rough.iter().map(|&i| points[i]).collect();
        let extracted = match fit_plane(&member_points) {
            Ok(refined) => plane_inliers(points, &remaining, &refined, params.dist_thresh),
            Err(_) => rough,
        };
        if extracted.len() < params.min_points {
            break;
        }
        let taken: std::collections::HashSet<usize> = extracted.iter().copied().collect();
        remaining.retain(|i| !taken.contains(i));
        clusters.push(extracted);
    }

    clusters.sort_by_key(|c| c[0]);
    remaining.sort_unstable();
    Ok(Segmentation {
        clusters,
        unassigned: remaining,
    })
}

/// Region growing: seed points in ascending order of local fit residual,
/// expand over the k-nearest-neighbor graph, accepting a neighbor when its
/// normal is within `angle_thresh` of the region plane's normal and it lies
/// within `dist_thresh` of that plane. The region plane is refit every 32
/// accepted points (an efficiency cadence).
pub fn region_grow_segment(cloud: &PointCloud, params: &RegionGrowParams) -> Result<Segmentation> {
    params.validate()?;
    let points = &cloud.points;
    let n = points.len();
    if n == 0 {
        return Ok(Segmentation::empty());
    }

    let fits = local_plane_fits(points, params.k);
    let normals: Vec<Vector3<f64>> = fits
        .iter()
        .map(|f| f.as_ref().map_or_else(Vector3::zeros, |pl| pl.normal))
        .collect();
    let mut seed_order: Vec<usize> = (0..n).collect();
    seed_order.sort_by(|&a, &b| {
        let ra = fits[a].as_ref().map_or(f64::INFINITY, |pl| pl.rms_residual);
        let rb = fits[b].as_ref().map_or(f64::INFINITY, |pl| pl.rms_residual);
        ra.total_cmp(&rb).then(a.cmp(&b))
    });

    let index = SpatialIndex::build(points);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            index
                .knn(&points[i], params.k + 1)
                .into_iter()
                .filter(|&j| j != i)
                .take(params.k)
                .collect()
        })
        .collect();

    // Unsigned normal comparison: PCA normals carry an arbitrary (if
    // deterministic) sign, so compare lines, not oriented vectors.
    let cos_thresh = params.angle_thresh.to_radians().cos();
    let mut assigned = vec![false; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut unassigned: Vec<usize> = Vec::new();
    let mut queue = std::collections::VecDeque::new();

    for &seed in &seed_order {
        if assigned[seed] {
            continue;
        }
        let Some(mut plane) = fits[seed].clone() else {
            continue; // degenerate neighborhood; left unassigned
        };
        let mut region = vec![seed];
        assigned[seed] = true;
        queue.clear();
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if assigned[q] {
                    continue;
                }
                let align = normals[q].dot(&plane.normal).abs();
                if align < cos_thresh {
                    continue;
                }
                if point_plane_distance(&points[q], &plane) >= params.dist_thresh {
                    continue;
                }
                assigned[q] = true;
                region.push(q);
                queue.push_back(q);
                if region.len() % 32 == 0 {
                    let member_points: Vec<Point3<f64>> =
                        region.iter().map(|&i| points[i]).collect();
                    if let Ok(refit) = fit_plane(&member_points) {
                        plane = refit;
                    }
                }
            }
        }
        if region.len() >= params.min_points {
            region.sort_unstable();
            clusters.push(region);
        } else {
            unassigned.extend(region);
        }
    }
    for i in 0..n {
        if !assigned[i] {
            unassigned.push(i);
        }
    }

    clusters.sort_by_key(|c| c[0]);
    unassigned.sort_unstable();
    Ok(Segmentation {
        clusters,
        unassigned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_building, RoofFamily, RoofSpec};
    use std::collections::BTreeSet;

    fn bare_cloud(points: Vec<Point3<f64>>) -> PointCloud {
        PointCloud {
            points,
            gt: None,
            normalization: None,
        }
    }

    fn grid(nx: usize, ny: usize, z: impl Fn(f64, f64) -> f64) -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for ix in 0..nx {
            for iy in 0..ny {
                let (x, y) = (ix as f64 * 0.1, iy as f64 * 0.1);
                pts.push(Point3::new(x, y, z(x, y)));
            }
        }
        pts
    }

    /// Disjointness + full coverage of 0..n.
    fn assert_valid(seg: &Segmentation, n: usize) {
        let mut seen = vec![false; n];
        for idx in seg
            .clusters
            .iter()
            .flatten()
            .chain(seg.unassigned.iter())
        {
            assert!(!seen[*idx], "index {idx} appears twice");
            seen[*idx] = true;
        }
        assert!(seen.iter().all(|&s| s), "not all indices covered");
    }

    #[test]
    fn ransac_single_plane_takes_everything() {
        let cloud = bare_cloud(grid(20, 15, |x, y| 0.3 * x - 0.1 * y + 2.0));
        let params = RansacParams {
            min_points: 50,
            ..RansacParams::default()
        };
        let seg = ransac_segment(&cloud, &params).unwrap();
        assert_eq!(seg.clusters.len(), 1);
        assert_eq!(seg.clusters[0].len(), cloud.len());
        assert!(seg.unassigned.is_empty());
        assert_valid(&seg, cloud.len());
    }

    #[test]
    fn ransac_separates_two_parallel_planes() {
        let mut points = grid(14, 14, |_, _| 0.0);
        let upper = grid(14, 14, |_, _| 1.0);
        let n_lower = points.len();
        points.extend(upper);
        let cloud = bare_cloud(points);
        let params = RansacParams {
            dist_thresh: 0.01,
            min_points: 50,
            iterations: 200,
            seed: 3,
        };
        let seg = ransac_segment(&cloud, &params).unwrap();
        assert_eq!(seg.clusters.len(), 2);
        assert_valid(&seg, cloud.len());
        let lower: BTreeSet<usize> = (0..n_lower).collect();
        let got0: BTreeSet<usize> = seg.clusters[0].iter().copied().collect();
        assert_eq!(got0, lower, "first cluster should be the z=0 plane");
        assert_eq!(seg.clusters[1].len(), n_lower);
    }

    #[test]
    fn ransac_is_deterministic_per_seed() {
        let spec = RoofSpec::new(RoofFamily::Hip, 9.0, 7.0, 3.0, 5.0, 12);
        let cloud = generate_building(&spec, 1200, 0.05).unwrap();
        let params = RansacParams {
            dist_thresh: 0.2,
            min_points: 80,
            iterations: 120,
            seed: 9,
        };
        let a = ransac_segment(&cloud, &params).unwrap();
        let b = ransac_segment(&cloud, &params).unwrap();
        assert_eq!(a, b);
        assert_valid(&a, cloud.len());
    }

    #[test]
    fn inlier_counting_matches_a_brute_force_scan() {
        let spec = RoofSpec::new(RoofFamily::Gable, 8.0, 6.0, 3.0, 5.0, 44);
        let cloud = generate_building(&spec, 500, 0.1).unwrap();
        let plane = PlaneModel::from_point_normal(
            &Point3::new(0.0, 0.0, 4.0),
            &Vector3::new(0.3, -0.1, 1.0).normalize(),
        )
        .unwrap();
        let candidates: Vec<usize> = (0..cloud.len()).step_by(2).collect();
        let thresh = 0.4;
        let got = plane_inliers(&cloud.points, &candidates, &plane, thresh);
        // Independent scan with the raw |n·p + d| formula.
        let want: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| {
                (plane.normal.dot(&cloud.points[i].coords) + plane.offset).abs() < thresh
            })
            .collect();
        assert_eq!(got, want);
        assert!(!got.is_empty() && got.len() < candidates.len());
    }

    #[test]
    fn ransac_below_min_points_unassigns_everything() {
        let cloud = bare_cloud(grid(5, 5, |_, _| 0.0));
        let params = RansacParams {
            min_points: 50,
            ..RansacParams::default()
        };
        let seg = ransac_segment(&cloud, &params).unwrap();
        assert!(seg.clusters.is_empty());
        assert_eq!(seg.unassigned.len(), cloud.len());
    }

    #[test]
    fn region_grow_single_plane_is_one_cluster() {
        let cloud = bare_cloud(grid(20, 15, |x, y| 0.2 * x + 0.3 * y));
        let params = RegionGrowParams {
            min_points: 50,
            ..RegionGrowParams::default()
        };
        let seg = region_grow_segment(&cloud, &params).unwrap();
        assert_eq!(seg.clusters.len(), 1);
        assert_eq!(seg.clusters[0].len(), cloud.len());
        assert_valid(&seg, cloud.len());
    }

    #[test]
    fn region_grow_gable_errors_stay_near_the_ridge() {
        let spec = RoofSpec::new(RoofFamily::Gable, 8.0, 6.0, 3.0, 5.0, 77);
        let cloud = generate_building(&spec, 1500, 0.0).unwrap();
        let gt_ids = &cloud.gt.as_ref().unwrap().instance_ids;
        let params = RegionGrowParams {
            angle_thresh: 10.0,
            dist_thresh: 0.2,
            k: 16,
            min_points: 100,
        };
        let seg = region_grow_segment(&cloud, &params).unwrap();
        assert_eq!(seg.clusters.len(), 2);
        assert_valid(&seg, cloud.len());

        // Majority-map each cluster to a GT face, then demand all
        // mismatches (and unassigned points) sit in the ridge band: within
        // two k-neighborhood radii of the ridge, the only region where
        // k-NN normals blend both faces. The default gable ridge is the
        // segment x=0, z=ridge_height.
        let ridge_dist = |p: &Point3<f64>| (p.x.powi(2) + (p.z - 5.0).powi(2)).sqrt();
        let index = SpatialIndex::build(&cloud.points);
        let knn_radius = (0..cloud.len())
            .map(|i| {
                let nb = index.knn(&cloud.points[i], params.k + 1);
                let far = *nb.last().unwrap();
                (cloud.points[i] - cloud.points[far]).norm()
            })
            .fold(0.0, f64::max);
        let band = 2.0 * knn_radius;

        let mut wrong = Vec::new();
        for cluster in &seg.clusters {
            let majority: i64 = {
                let ones = cluster.iter().filter(|&&i| gt_ids[i] == 1).count();
                if ones * 2 > cluster.len() {
                    1
                } else {
                    0
                }
            };
            wrong.extend(cluster.iter().copied().filter(|&i| gt_ids[i] != majority));
        }
        wrong.extend(seg.unassigned.iter().copied());
        for &i in &wrong {
            assert!(
                ridge_dist(&cloud.points[i]) <= band + 1e-9,
                "point {i} misassigned far from the ridge ({} > {band})",
                ridge_dist(&cloud.points[i])
            );
        }
    }

    #[test]
    fn region_grow_min_points_above_n_unassigns_everything() {
        let cloud = bare_cloud(grid(6, 6, |_, _| 0.0));
        let params = RegionGrowParams {
            min_points: 1000,
            ..RegionGrowParams::default()
        };
        let seg = region_grow_segment(&cloud, &params).unwrap();
        assert!(seg.clusters.is_empty());
        assert_eq!(seg.unassigned.len(), cloud.len());
    }

    #[test]
    fn region_grow_is_deterministic() {
        let spec = RoofSpec::new(RoofFamily::Pyramid, 9.0, 9.0, 3.0, 6.0, 5);
        let cloud = generate_building(&spec, 1000, 0.05).unwrap();
        let params = RegionGrowParams::default();
        let a = region_grow_segment(&cloud, &params).unwrap();
        let b = region_grow_segment(&cloud, &params).unwrap();
        assert_eq!(a, b);
        assert_valid(&a, cloud.len());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let cloud = bare_cloud(grid(4, 4, |_, _| 0.0));
        for bad in [
            RansacParams {
                dist_thresh: 0.0,
                ..RansacParams::default()
            },
            RansacParams {
                iterations: 0,
                ..RansacParams::default()
            },
            RansacParams {
                min_points: 2,
                ..RansacParams::default()
            },
        ] {
            assert!(ransac_segment(&cloud, &bad).is_err());
        }
        for bad in [
            RegionGrowParams {
                angle_thresh: 0.0,
                ..RegionGrowParams::default()
            },
            RegionGrowParams {
                angle_thresh: 90.0,
                ..RegionGrowParams::default()
            },
            RegionGrowParams {
                dist_thresh: -1.0,
                ..RegionGrowParams::default()
            },
            RegionGrowParams {
                k: 2,
                ..RegionGrowParams::default()
            },
            RegionGrowParams {
                min_points: 0,
                ..RegionGrowParams::default()
            },
        ] {
            assert!(region_grow_segment(&cloud, &bad).is_err());
        }
    }

    #[test]
    fn empty_cloud_is_fine_for_region_grow() {
        let cloud = bare_cloud(Vec::new());
        let seg = region_grow_segment(&cloud, &RegionGrowParams::default()).unwrap();
        assert_eq!(seg, Segmentation::empty());
    }
}
