//! Boundary point refinement: absorb unassigned points into planar patches.
//!
//! After clustering, boundary points (and members of dissolved small
//! clusters) remain unassigned. Each surviving cluster is summarized once —
//! a plane fit over the cluster's *original* coordinates plus its mean
//! embedding — and every unassigned point joins the patch minimizing
//! `point_plane_distance + embedding distance to the patch center`. The
//! summaries are frozen, so assignments are independent of processing order
//! and already-clustered points never move.
//!
//! Original (unshifted) coordinates are used for the plane fits because the
//! patches are geometric roof faces; shifted points collapse near instance
//! centers and carry no planar extent.

use nalgebra::Point3;

use crate::cloud::{embedding_distance, Embeddings};
use crate::cluster::Segmentation;
use crate::error::{Error, Result};
use crate::geom::{fit_plane, point_plane_distance, PlaneModel};

/// Frozen description of a cluster used for assignment decisions.
#[derive(Debug, Clone)]
pub struct PatchSummary {
    /// Least-squares plane through the cluster's original coordinates.
    pub plane: PlaneModel,
    /// Arithmetic mean of the cluster's embeddings.
    pub embed_center: Vec<f64>,
}

/// Relative weighting of the geometric and embedding distance terms.
///
/// The default (1, 1) adds them unweighted; with unit-radius normalized
/// clouds and unit-scale embedding codes the magnitudes are commensurate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineWeights {
    pub geometry: f64,
    pub embedding: f64,
}

impl Default for RefineWeights {
    fn default() -> Self {
        RefineWeights {
            geometry: 1.0,
            embedding: 1.0,
        }
    }
}

impl RefineWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.geometry.is_finite()
            && self.embedding.is_finite()
            && self.geometry >= 0.0
            && self.embedding >= 0.0
            && self.geometry + self.embedding > 0.0;
        if !ok {
            return Err(Error::InvalidSpec(format!(
                "refine weights must be non-negative with a positive sum, got ({}, {})",
                self.geometry, self.embedding
            )));
        }
        Ok(())
    }
}

/// Fit a plane to the cluster's original coordinates and average its
/// embeddings.
///
/// Fails with [`Error::DegenerateInput`] for clusters smaller than three
/// points or with no planar extent; callers drop such patches and return
/// their members to the unassigned pool.
pub fn summarize_patch(
    cluster: &[usize],
    points: &[Point3<f64>],
    embeddings: &Embeddings,
) -> Result<PatchSummary> {
    if cluster.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "patch summary needs at least 3 points, got {}",
            cluster.len()
        )));
    }
    let members: Vec<Point3<f64>> = cluster.iter().map(|&i| points[i]).collect();
    let plane = fit_plane(&members)?;
    let dim = embeddings.dim();
    let mut embed_center = vec![0.0; dim];
    for &i in cluster {
        for (acc, v) in embed_center.iter_mut().zip(embeddings.row(i)) {
            *acc += v;
        }
    }
    let inv = 1.0 / cluster.len() as f64;
    for acc in &mut embed_center {
        *acc *= inv;
    }
    Ok(PatchSummary {
        plane,
        embed_center,
    })
}

/// [`refine_boundaries_weighted`] with the default unweighted sum.
pub fn refine_boundaries(
    seg: &Segmentation,
    points: &[Point3<f64>],
    embeddings: &Embeddings,
) -> Result<Segmentation> {
    refine_boundaries_weighted(seg, points, embeddings, RefineWeights::default())
}

/// Assign every unassigned point to the patch with the smallest combined
/// plane distance + embedding-center distance; ties go to the lowest
/// cluster index.
///
/// Degenerate clusters (fewer than three points or no planar extent) are
/// dissolved into the pool before assignment. Errors with
/// [`Error::NoClusters`] when no viable patch remains.
pub fn refine_boundaries_weighted(
    seg: &Segmentation,
    points: &[Point3<f64>],
    embeddings: &Embeddings,
    weights: RefineWeights,
) -> Result<Segmentation> {
    weights.validate()?;
    if points.len() != embeddings.len() {
        return Err(Error::length_mismatch(
            "points vs embeddings",
            points.len(),
            embeddings.len(),
        ));
    }

    let mut clusters: Vec<Vec<usize>> = Vec::with_capacity(seg.clusters.len());
    let mut summaries: Vec<PatchSummary> = Vec::with_capacity(seg.clusters.len());
    let mut pool = seg.unassigned.clone();
    for cluster in &seg.clusters {
        match summarize_patch(cluster, points, embeddings) {
            Ok(summary) => {
                summaries.push(summary);
                clusters.push(cluster.clone());
            }
            Err(Error::DegenerateInput(_)) => pool.extend_from_slice(cluster),
            Err(e) => return Err(e),
        }
    }
    if clusters.is_empty() {
        return Err(Error::NoClusters(
            "no viable cluster to refine against".into(),
        ));
    }
    pool.sort_unstable();

    for &i in &pool {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, summary) in summaries.iter().enumerate() {
            let d = weights.geometry * point_plane_distance(&points[i], &summary.plane)
                + weights.embedding * embedding_distance(embeddings.row(i), &summary.embed_center);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        clusters[best].push(i);
    }
    for cluster in &mut clusters {
        cluster.sort_unstable();
    }
    Ok(Segmentation {
        clusters,
        unassigned: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{cluster_points, shift_points, ClusterParams};
    use crate::features::{oracle_predictions, NoiseSpec};
    use crate::gtlabel::derive_labels;
    use crate::synthgen::{generate_building, RoofFamily, RoofSpec};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use std::collections::BTreeSet;

    fn grid_on_plane(n: usize, z: impl Fn(f64, f64) -> f64) -> Vec<Point3<f64>> {
        let side = (n as f64).sqrt().ceil() as usize;
        (0..n)
            .map(|i| {
                let x = (i % side) as f64 * 0.1;
                let y = (i / side) as f64 * 0.1;
                Point3::new(x, y, z(x, y))
            })
            .collect()
    }

    #[test]
    fn coplanar_cluster_has_zero_rms() {
        let points = grid_on_plane(25, |x, y| 0.3 * x - 0.2 * y + 1.0);
        let emb = Embeddings::zeros(points.len(), 3);
        let cluster: Vec<usize> = (0..points.len()).collect();
        let summary = summarize_patch(&cluster, &points, &emb).unwrap();
        assert!(summary.plane.rms_residual < 1e-12);
        for p in &points {
            assert!(point_plane_distance(p, &summary.plane) < 1e-12);
        }
    }

    #[test]
    fn equal_embeddings_average_to_themselves() {
        let points = grid_on_plane(9, |_, _| 0.0);
        let row = [0.5, -1.5, 2.0];
        let mut data = Vec::new();
        for _ in 0..9 {
            data.extend_from_slice(&row);
        }
        let emb = Embeddings::new(3, data).unwrap();
        let summary = summarize_patch(&(0..9).collect::<Vec<_>>(), &points, &emb).unwrap();
        assert_eq!(summary.embed_center, row.to_vec());
    }

    #[test]
    fn oracle_gable_cluster_recovers_analytic_plane() {
        let spec = RoofSpec::new(RoofFamily::Gable, 8.0, 6.0, 3.0, 5.0, 31);
        let cloud = generate_building(&spec, 900, 0.0).unwrap();
        let gt = cloud.gt.as_ref().unwrap();
        let face_planes = gt.face_planes.clone();
        let ids = gt.instance_ids.clone();
        let emb = Embeddings::zeros(cloud.len(), 3);
        for face in 0..2 {
            let cluster: Vec<usize> = (0..cloud.len())
                .filter(|&i| ids[i] == face as i64)
                .collect();
            let summary = summarize_patch(&cluster, &cloud.points, &emb).unwrap();
            assert!(
                (summary.plane.normal - face_planes[face].normal).norm() < 1e-6,
                "face {face}: fitted {:?} vs analytic {:?}",
                summary.plane.normal,
                face_planes[face].normal
            );
            assert_relative_eq!(
                summary.plane.offset,
                face_planes[face].offset,
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn too_small_cluster_is_degenerate() {
        let points = grid_on_plane(4, |_, _| 0.0);
        let emb = Embeddings::zeros(4, 2);
        assert!(matches!(
            summarize_patch(&[0, 1], &points, &emb),
            Err(Error::DegenerateInput(_))
        ));
    }

    /// Two coplanar square patches side by side with distinct embeddings,
    /// plus loose points to refine.
    fn two_patch_scene() -> (Vec<Point3<f64>>, Embeddings, Segmentation) {
        let mut points = Vec::new();
        let mut data = Vec::new();
        for patch in 0..2usize {
            let x0 = patch as f64 * 5.0;
            for i in 0..16 {
                let (gx, gy) = ((i % 4) as f64 * 0.3, (i / 4) as f64 * 0.3);
                points.push(Point3::new(x0 + gx, gy, 0.1 * gx));
                data.extend([patch as f64 * 2.0, 1.0]);
            }
        }
        let seg = Segmentation {
            clusters: vec![(0..16).collect(), (16..32).collect()],
            unassigned: Vec::new(),
        };
        (points, Embeddings::new(2, data).unwrap(), seg)
    }

    #[test]
    fn point_matching_a_patch_exactly_joins_it() {
        let (mut points, emb, mut seg) = two_patch_scene();
        // On patch 1's plane (z = 0.1 x is shared, but far from patch 0 in
        // embedding), with embedding equal to patch 1's center.
        points.push(Point3::new(5.45, 0.45, 0.545));
        let mut data = emb.data().to_vec();
        data.extend([2.0, 1.0]);
        let emb = Embeddings::new(2, data).unwrap();
        seg.unassigned.push(32);

        let refined = refine_boundaries(&seg, &points, &emb).unwrap();
        assert_eq!(refined.clusters.len(), 2);
        assert!(refined.clusters[1].contains(&32));
        assert!(refined.unassigned.is_empty());
    }

    #[test]
    fn zero_clusters_is_an_error() {
        let points = grid_on_plane(4, |_, _| 0.0);
        let emb = Embeddings::zeros(4, 2);
        let seg = Segmentation {
            clusters: Vec::new(),
            unassigned: vec![0, 1, 2, 3],
        };
        assert!(matches!(
            refine_boundaries(&seg, &points, &emb),
            Err(Error::NoClusters(_))
        ));
    }

    #[test]
    fn single_cluster_absorbs_everything() {
        let (points, emb, seg) = two_patch_scene();
        let lone = Segmentation {
            clusters: vec![seg.clusters[0].clone()],
            unassigned: (16..32).collect(),
        };
        let refined = refine_boundaries(&lone, &points, &emb).unwrap();
        assert_eq!(refined.clusters.len(), 1);
        assert_eq!(refined.clusters[0], (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn clustered_points_never_move_and_count_is_preserved() {
        let (mut points, emb, mut seg) = two_patch_scene();
        points.push(Point3::new(2.5, 0.5, 3.0));
        let mut data = emb.data().to_vec();
        data.extend([1.0, 1.0]);
        let emb = Embeddings::new(2, data).unwrap();
        seg.unassigned.push(32);
        let refined = refine_boundaries(&seg, &points, &emb).unwrap();
        assert_eq!(refined.clusters.len(), seg.clusters.len());
        for (before, after) in seg.clusters.iter().zip(&refined.clusters) {
            let b: BTreeSet<usize> = before.iter().copied().collect();
            let a: BTreeSet<usize> = after.iter().copied().collect();
            assert!(b.is_subset(&a));
        }
        assert_eq!(refined.len(), points.len());
    }

    #[test]
    fn exact_tie_goes_to_the_lowest_cluster_index() {
        // Two identical patches (same plane, same embeddings) — every
        // distance ties, so the pool lands in cluster 0.
        let points = grid_on_plane(20, |_, _| 0.0);
        let emb = Embeddings::zeros(points.len(), 2);
        let seg = Segmentation {
            clusters: vec![(0..8).collect(), (8..16).collect()],
            unassigned: (16..20).collect(),
        };
        let refined = refine_boundaries(&seg, &points, &emb).unwrap();
        assert_eq!(refined.clusters[0], {
            let mut v: Vec<usize> = (0..8).chain(16..20).collect();
            v.sort_unstable();
            v
        });
        assert_eq!(refined.clusters[1], (8..16).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_cluster_dissolves_into_the_pool() {
        let (points, emb, seg) = two_patch_scene();
        // Add a collinear "cluster" of 5 points along a line: plane fit
        // cannot orient it, so its members must be reassigned.
        let mut points = points;
        let mut data = emb.data().to_vec();
        for i in 0..5 {
            points.push(Point3::new(i as f64 * 0.1, 0.0, 10.0));
            data.extend([2.0, 1.0]); // embedding matches patch 1
        }
        let emb = Embeddings::new(2, data).unwrap();
        let seg = Segmentation {
            clusters: vec![
                seg.clusters[0].clone(),
                seg.clusters[1].clone(),
                (32..37).collect(),
            ],
            unassigned: Vec::new(),
        };
        let refined = refine_boundaries(&seg, &points, &emb).unwrap();
        assert_eq!(refined.clusters.len(), 2);
        for i in 32..37 {
            assert!(refined.clusters[1].contains(&i));
        }
    }

    #[test]
    fn all_degenerate_clusters_yield_no_clusters_error() {
        let points: Vec<Point3<f64>> = (0..6).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let emb = Embeddings::zeros(6, 2);
        let seg = Segmentation {
            clusters: vec![(0..6).collect()],
            unassigned: Vec::new(),
        };
        assert!(matches!(
            refine_boundaries(&seg, &points, &emb),
            Err(Error::NoClusters(_))
        ));
    }

    #[test]
    fn weights_steer_the_assignment() {
        // Point on patch 0's plane but with patch 1's embedding.
        let (mut points, emb, mut seg) = two_patch_scene();
        points.push(Point3::new(0.45, 0.45, 0.045));
        let mut data = emb.data().to_vec();
        data.extend([2.0, 1.0]);
        let emb = Embeddings::new(2, data).unwrap();
        seg.unassigned.push(32);

        let geom_only = RefineWeights {
            geometry: 1.0,
            embedding: 0.0,
        };
        let refined = refine_boundaries_weighted(&seg, &points, &emb, geom_only).unwrap();
        assert!(refined.clusters[0].contains(&32));

        let embed_only = RefineWeights {
            geometry: 0.0,
            embedding: 1.0,
        };
        let refined = refine_boundaries_weighted(&seg, &points, &emb, embed_only).unwrap();
        assert!(refined.clusters[1].contains(&32));

        assert!(refine_boundaries_weighted(
            &seg,
            &points,
            &emb,
            RefineWeights {
                geometry: -1.0,
                embedding: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn noise_free_gable_refines_to_exact_ground_truth() {
        let spec = RoofSpec::new(RoofFamily::Gable, 8.0, 6.0, 3.0, 5.0, 97);
        let cloud = generate_building(&spec, 2048, 0.0).unwrap().normalize();
        let labels = derive_labels(&cloud, 16).unwrap();
        let preds = oracle_predictions(&cloud, &labels, &NoiseSpec::zero(1), 4).unwrap();

        // Cluster only the plane-classified points, in the global index
        // space; boundary points start unassigned.
        let shifted = shift_points(&cloud.points, &preds.offsets).unwrap();
        let plane_idx: Vec<usize> = (0..cloud.len())
            .filter(|&i| preds.semantic[i] == crate::cloud::Semantic::Plane)
            .collect();
        let sub_points: Vec<Point3<f64>> = plane_idx.iter().map(|&i| shifted[i]).collect();
        let mut sub_data = Vec::new();
        for &i in &plane_idx {
            sub_data.extend_from_slice(preds.embeddings.row(i));
        }
        let sub_emb = Embeddings::new(preds.embeddings.dim(), sub_data).unwrap();
        let sub_seg = cluster_points(&sub_points, &sub_emb, &ClusterParams::default()).unwrap();

        let mut seg = Segmentation::empty();
        for cluster in &sub_seg.clusters {
            seg.clusters
                .push(cluster.iter().map(|&l| plane_idx[l]).collect());
        }
        let mut unassigned: BTreeSet<usize> = (0..cloud.len()).collect();
        for cluster in &seg.clusters {
            for &i in cluster {
                unassigned.remove(&i);
            }
        }
        seg.unassigned = unassigned.into_iter().collect();
        assert_eq!(seg.clusters.len(), 2, "zero-noise gable should split in two");
        assert!(!seg.unassigned.is_empty(), "ridge boundary points expected");

        let refined = refine_boundaries(&seg, &cloud.points, &preds.embeddings).unwrap();
        assert!(refined.unassigned.is_empty());

        // The refined partition must equal the ground-truth instance sets.
        let ids = &cloud.gt.as_ref().unwrap().instance_ids;
        let mut truth: std::collections::BTreeMap<i64, BTreeSet<usize>> = Default::default();
        for (i, &id) in ids.iter().enumerate() {
            truth.entry(id).or_default().insert(i);
        }
        let got: BTreeSet<BTreeSet<usize>> = refined
            .clusters
            .iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let want: BTreeSet<BTreeSet<usize>> = truth.into_values().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn shifted_offsets_are_not_used_for_plane_fits() {
        // Degenerate check backing the "original coordinates" decision: a
        // patch whose shifted points collapse to one location must still
        // summarize fine from original coordinates.
        let points = grid_on_plane(16, |x, y| 0.5 * x + 0.25 * y);
        let emb = Embeddings::zeros(16, 2);
        let centroid = points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / 16.0;
        let offsets: Vec<Vector3<f64>> = points.iter().map(|p| centroid - p.coords).collect();
        let shifted = shift_points(&points, &offsets).unwrap();
        assert!(shifted.windows(2).all(|w| (w[0] - w[1]).norm() < 1e-12));
        // fit_plane on the shifted pile would be degenerate; originals work.
        assert!(fit_plane(&shifted).is_err());
        let summary = summarize_patch(&(0..16).collect::<Vec<_>>(), &points, &emb).unwrap();
        assert!(summary.plane.rms_residual < 1e-9);
    }
}
