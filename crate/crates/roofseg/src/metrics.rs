//! Instance segmentation quality: coverage, weighted coverage, mean
//! precision and mean recall at an IoU threshold of 0.5.
//!
//! Ground-truth instances are the sets of point indices sharing a
//! non-negative instance id; non-roof points (id −1) are removed from both
//! sides before anything is computed. Matching is best-match (every
//! instance may claim its highest-IoU counterpart, non-exclusively), which
//! keeps all four metrics mutually coherent. Precision/recall use a
//! *strict* inequality at 0.5, so a prediction overlapping exactly half of
//! a ground-truth instance counts for neither.

use std::collections::{BTreeMap, HashSet};

use crate::cloud::GroundTruth;
use crate::cluster::Segmentation;
use crate::error::{Error, Result};

/// Per-building (or aggregated) segmentation quality numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Mean over ground-truth instances of the best IoU any prediction
    /// achieves against them.
    pub cov: f64,
    /// Like `cov` but each instance weighted by its point count.
    pub wcov: f64,
    /// Fraction of predictions whose best IoU exceeds 0.5.
    pub mprec: f64,
    /// Fraction of ground-truth instances whose best IoU exceeds 0.5.
    pub mrec: f64,
    pub n_gt_instances: usize,
    pub n_pred_instances: usize,
}

/// Intersection over union of two sets of point indices.
///
/// Indices within each slice must be unique; order is irrelevant. Two empty
/// sets have no defined overlap and error with [`Error::BothEmpty`].
pub fn iou(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::BothEmpty);
    }
    let small: HashSet<usize> = if a.len() <= b.len() {
        a.iter().copied().collect()
    } else {
        b.iter().copied().collect()
    };
    let large = if a.len() <= b.len() { b } else { a };
    let inter = large.iter().filter(|i| small.contains(i)).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Score a predicted segmentation against ground-truth instance ids.
///
/// Predicted clusters are restricted to roof points first; clusters left
/// empty by that restriction are dropped. A prediction with no clusters at
/// all scores zero on every metric. Errors with [`Error::EmptyGroundTruth`]
/// when no point carries a roof instance id.
pub fn evaluate(pred: &Segmentation, gt: &GroundTruth) -> Result<MetricsReport> {
    let n = gt.instance_ids.len();
    let mut gt_sets: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &id) in gt.instance_ids.iter().enumerate() {
        if id >= 0 {
            gt_sets.entry(id).or_default().push(i);
        }
    }
    if gt_sets.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let gt_sets: Vec<Vec<usize>> = gt_sets.into_values().collect();

    let mut pred_sets: Vec<Vec<usize>> = Vec::new();
    for cluster in &pred.clusters {
        if let Some(&bad) = cluster.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidSpec(format!(
                "segmentation index {bad} out of range for {n} ground-truth points"
            )));
        }
        let roof_only: Vec<usize> = cluster
            .iter()
            .copied()
            .filter(|&i| gt.instance_ids[i] >= 0)
            .collect();
        if !roof_only.is_empty() {
            pred_sets.push(roof_only);
        }
    }

    let n_gt = gt_sets.len();
    let n_pred = pred_sets.len();
    if pred_sets.is_empty() {
        return Ok(MetricsReport {
            cov: 0.0,
            wcov: 0.0,
            mprec: 0.0,
            mrec: 0.0,
            n_gt_instances: n_gt,
            n_pred_instances: 0,
        });
    }

    let total_gt_points: usize = gt_sets.iter().map(Vec::len).sum();
    let mut cov = 0.0;
    let mut wcov_weighted = 0.0;
    let mut recalled = 0usize;
    for g in &gt_sets {
        let best = pred_sets
            .iter()
            .map(|p| iou(g, p).expect("nonempty sets"))
            .fold(0.0, f64::max);
        cov += best;
        wcov_weighted += best * g.len() as f64;
        if best > 0.5 {
            recalled += 1;
        }
    }
    cov /= n_gt as f64;
    // Single final division keeps the perfect-match case exactly 1.0.
    let wcov = wcov_weighted / total_gt_points as f64;

    let mut precise = 0usize;
    for p in &pred_sets {
        let best = gt_sets
            .iter()
            .map(|g| iou(p, g).expect("nonempty sets"))
            .fold(0.0, f64::max);
        if best > 0.5 {
            precise += 1;
        }
    }

    Ok(MetricsReport {
        cov,
        wcov,
        mprec: precise as f64 / n_pred as f64,
        mrec: recalled as f64 / n_gt as f64,
        n_gt_instances: n_gt,
        n_pred_instances: n_pred,
    })
}

/// Unweighted per-building mean of each metric; instance counts are summed.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::EmptyList);
    }
    let n = reports.len() as f64;
    Ok(MetricsReport {
        cov: reports.iter().map(|r| r.cov).sum::<f64>() / n,
        wcov: reports.iter().map(|r| r.wcov).sum::<f64>() / n,
        mprec: reports.iter().map(|r| r.mprec).sum::<f64>() / n,
        mrec: reports.iter().map(|r| r.mrec).sum::<f64>() / n,
        n_gt_instances: reports.iter().map(|r| r.n_gt_instances).sum(),
        n_pred_instances: reports.iter().map(|r| r.n_pred_instances).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt_from_ids(ids: Vec<i64>) -> GroundTruth {
        GroundTruth {
            instance_ids: ids,
            semantics: None,
            face_planes: Vec::new(),
        }
    }

    fn seg(clusters: Vec<Vec<usize>>) -> Segmentation {
        Segmentation {
            clusters,
            unassigned: Vec::new(),
        }
    }

    /// Segmentation whose clusters are exactly the GT instances.
    fn seg_from_ids(ids: &[i64]) -> Segmentation {
        let mut map: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &id) in ids.iter().enumerate() {
            if id >= 0 {
                map.entry(id).or_default().push(i);
            }
        }
        seg(map.into_values().collect())
    }

    #[test]
    fn iou_pinned_values() {
        assert_eq!(iou(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(iou(&[0, 1], &[2, 3]).unwrap(), 0.0);
        assert_eq!(iou(&[0, 1], &[1, 2]).unwrap(), 1.0 / 3.0);
        assert_eq!(iou(&[], &[1, 2]).unwrap(), 0.0);
        assert!(matches!(iou(&[], &[]), Err(Error::BothEmpty)));
    }

    #[test]
    fn perfect_prediction_scores_ones() {
        let ids = vec![0, 0, 0, 1, 1, 1, 1, 2, 2];
        let report = evaluate(&seg_from_ids(&ids), &gt_from_ids(ids.clone())).unwrap();
        assert_eq!(
            (report.cov, report.wcov, report.mprec, report.mrec),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(report.n_gt_instances, 3);
        assert_eq!(report.n_pred_instances, 3);
    }

    #[test]
    fn one_blob_over_two_equal_instances_is_half_coverage() {
        // Each GT instance reaches IoU exactly 0.5 against the single
        // cluster — below the strict threshold, so precision and recall
        // are zero while coverage is one half.
        let ids = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let blob = seg(vec![(0..8).collect()]);
        let report = evaluate(&blob, &gt_from_ids(ids)).unwrap();
        assert_eq!(report.cov, 0.5);
        assert_eq!(report.wcov, 0.5);
        assert_eq!(report.mprec, 0.0);
        assert_eq!(report.mrec, 0.0);
    }

    #[test]
    fn empty_prediction_scores_zeros() {
        let ids = vec![0, 0, 1, 1];
        let report = evaluate(&seg(Vec::new()), &gt_from_ids(ids)).unwrap();
        assert_eq!(
            (report.cov, report.wcov, report.mprec, report.mrec),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(report.n_gt_instances, 2);
        assert_eq!(report.n_pred_instances, 0);
    }

    #[test]
    fn no_roof_instances_is_an_error() {
        let report = evaluate(&seg(vec![vec![0, 1]]), &gt_from_ids(vec![-1, -1]));
        assert!(matches!(report, Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let report = evaluate(&seg(vec![vec![0, 5]]), &gt_from_ids(vec![0, 0]));
        assert!(report.is_err());
    }

    #[test]
    fn non_roof_points_are_excluded_everywhere() {
        // Roof points 0..6 in two instances; 6..10 are clutter. A pred
        // cluster of pure clutter must vanish rather than dilute mPrec,
        // and clutter inside a roof cluster must not change its IoU.
        let ids = vec![0, 0, 0, 1, 1, 1, -1, -1, -1, -1];
        let clean = seg(vec![vec![0, 1, 2], vec![3, 4, 5]]);
        let noisy = seg(vec![vec![0, 1, 2, 6, 7], vec![3, 4, 5, 8], vec![9]]);
        let a = evaluate(&clean, &gt_from_ids(ids.clone())).unwrap();
        let b = evaluate(&noisy, &gt_from_ids(ids)).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.n_pred_instances, 2);
    }

    #[test]
    fn weighted_coverage_tracks_instance_size() {
        // 10-point instance missed entirely, 30-point instance matched
        // exactly: Cov averages to 0.5 but WCov weights the hit 30/40.
        let mut ids = vec![0i64; 10];
        ids.extend(vec![1i64; 30]);
        let pred = seg(vec![(10..40).collect()]);
        let report = evaluate(&pred, &gt_from_ids(ids)).unwrap();
        assert_eq!(report.cov, 0.5);
        assert_eq!(report.wcov, 0.75);
        assert_eq!(report.mprec, 1.0);
        assert_eq!(report.mrec, 0.5);
    }

    #[test]
    fn wcov_equals_cov_for_equal_sized_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = rng.random_range(2..6);
            let size = rng.random_range(3..30);
            let ids: Vec<i64> = (0..k * size).map(|i| (i / size) as i64).collect();
            // Random prediction: each point to one of k clusters.
            let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
            for i in 0..ids.len() {
                clusters[rng.random_range(0..k)].push(i);
            }
            clusters.retain(|c| !c.is_empty());
            let report = evaluate(&seg(clusters), &gt_from_ids(ids)).unwrap();
            assert!(
                (report.cov - report.wcov).abs() < 1e-12,
                "cov {} vs wcov {}",
                report.cov,
                report.wcov
            );
        }
    }

    #[test]
    fn instance_id_permutation_leaves_metrics_unchanged() {
        let ids = vec![0, 0, 1, 1, 1, 2, 2, -1];
        let relabeled: Vec<i64> = ids
            .iter()
            .map(|&id| match id {
                0 => 2,
                1 => 0,
                2 => 1,
                other => other,
            })
            .collect();
        let pred = seg(vec![vec![0, 1, 2], vec![3, 4], vec![5, 6]]);
        let a = evaluate(&pred, &gt_from_ids(ids)).unwrap();
        let b = evaluate(&pred, &gt_from_ids(relabeled)).unwrap();
        assert_eq!(a, b);
    }

    /// Best overlap *count* per GT instance against any cluster.
    fn best_overlaps(clusters: &[Vec<usize>], ids: &[i64], n_inst: usize) -> Vec<usize> {
        (0..n_inst as i64)
            .map(|inst| {
                clusters
                    .iter()
                    .map(|c| c.iter().filter(|&&i| ids[i] == inst).count())
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    // Note: splitting a cluster can *raise* Cov when the removed part lay
    // outside the instance (g={0}, p={0,1}: IoU 1/2 → 1). What is monotone:
    // the best overlap count never rises, and Cov never rises when the
    // split cluster sits inside a single instance.
    #[test]
    fn splitting_shrinks_best_overlap_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for case in 0..60 {
            let n = rng.random_range(20..120);
            let n_inst = rng.random_range(1..5usize);
            let ids: Vec<i64> = (0..n).map(|_| rng.random_range(0..n_inst) as i64).collect();
            let k = rng.random_range(1..5usize);
            let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
            for i in 0..n {
                clusters[rng.random_range(0..k)].push(i);
            }
            clusters.retain(|c| c.len() >= 2);
            if clusters.is_empty() {
                continue;
            }
            let before = best_overlaps(&clusters, &ids, n_inst);

            let widx = rng.random_range(0..clusters.len());
            let victim = clusters.remove(widx);
            let cut = rng.random_range(1..victim.len());
            let (lo, hi) = victim.split_at(cut);
            clusters.push(lo.to_vec());
            clusters.push(hi.to_vec());
            let after = best_overlaps(&clusters, &ids, n_inst);
            for (inst, (b, a)) in before.iter().zip(&after).enumerate() {
                assert!(a <= b, "case {case} instance {inst}: overlap rose {b} -> {a}");
            }
        }
    }

    #[test]
    fn splitting_a_pure_cluster_never_raises_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..60 {
            let n_inst = rng.random_range(2..5usize);
            let size = rng.random_range(6..40);
            let ids: Vec<i64> = (0..n_inst * size).map(|i| (i / size) as i64).collect();
            // Pure clusters: each entirely inside one instance.
            let mut clusters: Vec<Vec<usize>> = Vec::new();
            for inst in 0..n_inst {
                let members: Vec<usize> = (inst * size..(inst + 1) * size).collect();
                let parts = rng.random_range(1..3usize);
                if parts == 1 {
                    clusters.push(members);
                } else {
                    let cut = rng.random_range(1..members.len());
                    clusters.push(members[..cut].to_vec());
                    clusters.push(members[cut..].to_vec());
                }
            }
            let before = evaluate(&seg(clusters.clone()), &gt_from_ids(ids.clone())).unwrap();

            let widx = rng.random_range(0..clusters.len());
            if clusters[widx].len() < 2 {
                continue;
            }
            let victim = clusters.remove(widx);
            let cut = rng.random_range(1..victim.len());
            clusters.push(victim[..cut].to_vec());
            clusters.push(victim[cut..].to_vec());
            let after = evaluate(&seg(clusters), &gt_from_ids(ids)).unwrap();
            assert!(
                after.cov <= before.cov + 1e-12,
                "case {case}: cov rose from {} to {}",
                before.cov,
                after.cov
            );
        }
    }

    #[test]
    fn aggregate_pinned_values() {
        let zero = MetricsReport {
            cov: 0.0,
            wcov: 0.0,
            mprec: 0.0,
            mrec: 0.0,
            n_gt_instances: 2,
            n_pred_instances: 0,
        };
        let one = MetricsReport {
            cov: 1.0,
            wcov: 1.0,
            mprec: 1.0,
            mrec: 1.0,
            n_gt_instances: 3,
            n_pred_instances: 3,
        };
        assert_eq!(aggregate(std::slice::from_ref(&one)).unwrap(), one);
        let mean = aggregate(&[zero.clone(), one.clone()]).unwrap();
        assert_eq!(
            (mean.cov, mean.wcov, mean.mprec, mean.mrec),
            (0.5, 0.5, 0.5, 0.5)
        );
        assert_eq!(mean.n_gt_instances, 5);
        assert_eq!(mean.n_pred_instances, 3);
        let swapped = aggregate(&[one, zero]).unwrap();
        assert_eq!(mean, swapped);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyList)));
    }
}
