//! Joint-space flood-fill clustering of shifted plane points.
//!
//! Points are grouped by BFS over the graph whose edges connect pairs with
//! `w1 * |p_i - p_j| + w2 * |f_i - f_j| < r` (Euclidean distance of shifted
//! coordinates plus embedding distance). Scanning seeds in ascending index
//! order makes the output deterministic; components no larger than the
//! minimum size are dissolved into the unassigned set for later refinement.
//!
//! Two implementations share one predicate function: a literal quadratic
//! scan ([`cluster_points`]) that serves as the reference, and an
//! accelerated version ([`cluster_points_accelerated`]) whose prefilters are
//! conservative — every pair they discard provably fails the predicate — so
//! both produce bit-identical partitions.

use nalgebra::Point3;

use crate::cloud::Embeddings;
use crate::error::{Error, Result};
use crate::geom::SpatialIndex;

/// Inputs shared by both clustering implementations.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    /// Joint-space threshold; an edge needs combined distance strictly below.
    pub radius: f64,
    /// Weight of the Euclidean term.
    pub w1: f64,
    /// Weight of the embedding term.
    pub w2: f64,
    /// Clusters must be strictly larger than this to survive.
    pub min_cluster_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            radius: 0.5,
            w1: 0.1,
            w2: 0.9,
            min_cluster_size: 100,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "clustering radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.w1 >= 0.0) || !(self.w2 >= 0.0) || self.w1 + self.w2 <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "weights must be non-negative with a positive sum, got w1={} w2={}",
                self.w1, self.w2
            )));
        }
        if self.min_cluster_size < 1 {
            return Err(Error::InvalidSpec(
                "min_cluster_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A partition of the input indices into surviving clusters plus leftovers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    /// Ordered by seed (= smallest member) index; members ascending.
    pub clusters: Vec<Vec<usize>>,
    /// Points in dissolved or never-formed clusters, ascending.
    pub unassigned: Vec<usize>,
}

impl Segmentation {
    pub fn empty() -> Self {
        Segmentation {
            clusters: Vec::new(),
            unassigned: Vec::new(),
        }
    }

    /// Total number of indices covered (clusters plus unassigned).
    pub fn len(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum::<usize>() + self.unassigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-point cluster id; -1 for unassigned. `n` is the point count.
    pub fn labels(&self, n: usize) -> Vec<i64> {
        let mut labels = vec![-1i64; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = c as i64;
            }
        }
        labels
    }
}

/// Elementwise `p + offset`.
pub fn shift_points(
    points: &[Point3<f64>],
    offsets: &[nalgebra::Vector3<f64>],
) -> Result<Vec<Point3<f64>>> {
    if points.len() != offsets.len() {
        return Err(Error::length_mismatch(
            "points vs offsets",
            points.len(),
            offsets.len(),
        ));
    }
    Ok(points
        .iter()
        .zip(offsets)
        .map(|(p, o)| p + o)
        .collect())
}

/// The joint-space edge predicate. Both implementations must call exactly
/// this function so their partitions agree bit for bit.
#[inline]
fn joined(
    points: &[Point3<f64>],
    embeddings: &Embeddings,
    params: &ClusterParams,
    a: usize,
    b: usize,
) -> bool {
    let de = (points[a] - points[b]).norm();
    let df = embeddings.distance(a, b);
    params.w1 * de + params.w2 * df < params.radius
}

fn check_inputs(points: &[Point3<f64>], embeddings: &Embeddings) -> Result<()> {
    if points.len() != embeddings.len() {
        return Err(Error::length_mismatch(
            "shifted points vs embeddings",
            points.len(),
            embeddings.len(),
        ));
    }
    Ok(())
}

/// Assemble the final segmentation from per-point component labels.
///
/// Components are numbered by discovery order (ascending seed); members are
/// collected in ascending index order, and small components dissolve into
/// the unassigned list.
fn finalize(components: Vec<usize>, n_components: usize, min_size: usize) -> Segmentation {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_components];
    for (i, &c) in components.iter().enumerate() {
        groups[c].push(i);
    }
    let mut seg = Segmentation::empty();
    for group in groups {
        if group.len() > min_size {
            seg.clusters.push(group);
        } else {
            seg.unassigned.extend(group);
        }
    }
    seg.unassigned.sort_unstable();
    seg
}

/// Literal flood fill: every BFS expansion scans all remaining points.
/// Quadratic; the reference implementation for equivalence tests.
pub fn cluster_points(
    shifted: &[Point3<f64>],
    embeddings: &Embeddings,
    params: &ClusterParams,
) -> Result<Segmentation> {
    check_inputs(shifted, embeddings)?;
    params.validate()?;
    let n = shifted.len();
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    let mut queue = std::collections::VecDeque::new();
    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        component[seed] = id;
        queue.push_back(seed);
        while let Some(k) = queue.pop_front() {
            for j in 0..n {
                if component[j] == usize::MAX && joined(shifted, embeddings, params, k, j) {
                    component[j] = id;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(finalize(component, n_components, params.min_cluster_size))
}

/// Flood fill with conservative candidate pruning; output is identical to
/// [`cluster_points`] on every input.
///
/// Pruning never decides membership: it only skips pairs that provably fail
/// the predicate. A k-d tree over the shifted points bounds the Euclidean
/// term (`w1 * de < r` is necessary when `w1 > 0`), and the embedding
/// distance accumulation aborts once its partial sum exceeds the remaining
/// budget. Both bounds carry a small inflation so floating-point rounding
/// can never discard a true edge; survivors are re-checked with the shared
/// predicate.
pub fn cluster_points_accelerated(
    shifted: &[Point3<f64>],
    embeddings: &Embeddings,
    params: &ClusterParams,
) -> Result<Segmentation> {
    check_inputs(shifted, embeddings)?;
    params.validate()?;
    let n = shifted.len();
    if n == 0 {
        return Ok(Segmentation::empty());
    }

    let spatial_bound = if params.w1 > 0.0 {
        Some(params.radius / params.w1 * (1.0 + 1e-9))
    } else {
        None
    };
    let index = spatial_bound.is_some().then(|| SpatialIndex::build(shifted));

    // Unvisited indices as a doubly linked list for O(1) removal while
    // scanning in ascending order (used when no spatial prefilter applies).
    let mut next: Vec<usize> = (1..=n).collect();
    let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
    let mut head = 0usize;
    let remove = |i: usize, head: &mut usize, next: &mut [usize], prev: &mut [usize]| {
        let (p, nx) = (prev[i], next[i]);
        if p == usize::MAX {
            *head = nx;
        } else {
            next[p] = nx;
        }
        if nx < n {
            prev[nx] = p;
        }
    };

    let dim = embeddings.dim();
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    let mut queue = std::collections::VecDeque::new();
    let mut candidates: Vec<usize> = Vec::new();

    // Conservative test: false only when the predicate surely fails.
    let might_join = |k: usize, j: usize| -> bool {
        let de = (shifted[k] - shifted[j]).norm();
        let spent = params.w1 * de;
        if spent >= params.radius {
            return false;
        }
        if params.w2 == 0.0 {
            return true;
        }
        // Absolute slack covers the double rounding in w1*de + w2*df.
        let budget = (params.radius - spent + 1e-12 * params.radius) / params.w2;
        let budget_sq = budget * budget;
        let (ra, rb) = (embeddings.row(k), embeddings.row(j));
        let mut sum = 0.0;
        for c in 0..dim {
            let d = ra[c] - rb[c];
            sum += d * d;
            if sum > budget_sq {
                return false;
            }
        }
        true
    };

    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        component[seed] = id;
        remove(seed, &mut head, &mut next, &mut prev);
        queue.push_back(seed);
        while let Some(k) = queue.pop_front() {
            candidates.clear();
            if let (Some(bound), Some(index)) = (spatial_bound, index.as_ref()) {
                candidates.extend(
                    index
                        .within_radius(&shifted[k], bound)
                        .into_iter()
                        .filter(|&j| component[j] == usize::MAX),
                );
            } else {
                let mut i = head;
                while i < n {
                    candidates.push(i);
                    i = next[i];
                }
            }
            for &j in &candidates {
                if component[j] == usize::MAX
                    && might_join(k, j)
                    && joined(shifted, embeddings, params, k, j)
                {
                    component[j] = id;
                    remove(j, &mut head, &mut next, &mut prev);
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(finalize(component, n_components, params.min_cluster_size))
}
