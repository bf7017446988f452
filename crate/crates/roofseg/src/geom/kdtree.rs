//! Exact k-d tree over 3-d points.
//!
//! Queries are guaranteed to return exactly what a linear scan over
//! `(squared distance, index)` pairs would: pruning only discards a subtree
//! when every point in it is strictly farther than the current k-th best
//! pair, and candidate ordering is the lexicographic order on those pairs.

use nalgebra::Point3;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Index into the original point slice.
    point: usize,
    axis: u8,
    left: i32,
    right: i32,
}

/// Spatial index over an immutable snapshot of points.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3<f64>>,
    nodes: Vec<Node>,
    root: i32,
}

/// Candidate ordered by `(squared distance, index)`, largest first so a
/// `BinaryHeap` acts as a bounded worst-candidate heap.
#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.idx.cmp(&other.idx))
    }
}

fn squared_distance(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    /// Build an index over a copy of `points`.
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order[..], 0, &mut nodes);
        SpatialIndex {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    fn build_rec(
        points: &[Point3<f64>],
        order: &mut [usize],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis as usize]
                .total_cmp(&points[b][axis as usize])
                .then(a.cmp(&b))
        });
        let point = order[mid];
        let node_id = nodes.len() as i32;
        nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, hi, depth + 1, nodes);
        nodes[node_id as usize].left = left;
        nodes[node_id as usize].right = right;
        node_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &Point3<f64> {
        &self.points[idx]
    }

    /// Indices of the `k` nearest points to `query`, ascending by
    /// `(distance, index)`. Returns all points when `k >= len`.
    /// The query point itself is not special: if it is in the set it appears
    /// at distance zero.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(self.root, query, k, &mut heap);
        let mut result: Vec<Candidate> = heap.into_vec();
        result.sort_by(|a, b| a.cmp(b));
        result.into_iter().map(|c| c.idx).collect()
    }

    fn knn_rec(&self, node_id: i32, query: &Point3<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        if node_id < 0 {
            return;
        }
        let node = self.nodes[node_id as usize];
        let p = &self.points[node.point];
        let cand = Candidate {
            d2: squared_distance(query, p),
            idx: node.point,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }

        let axis = node.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.knn_rec(near, query, k, heap);
        // The far subtree only holds points whose axis offset is at least
        // |delta|, hence squared distance at least delta^2. Strict comparison
        // keeps equal-distance candidates reachable for index tie-breaks.
        let must_visit = match heap.peek() {
            Some(worst) if heap.len() == k => delta * delta <= worst.d2,
            _ => true,
        };
        if must_visit {
            self.knn_rec(far, query, k, heap);
        }
    }

    /// Indices of all points within `radius` (inclusive) of `query`,
    /// ascending by index.
    pub fn within_radius(&self, query: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if radius >= 0.0 {
            self.radius_rec(self.root, query, radius * radius, &mut out);
            out.sort_unstable();
        }
        out
    }

    fn radius_rec(&self, node_id: i32, query: &Point3<f64>, r2: f64, out: &mut Vec<usize>) {
        if node_id < 0 {
            return;
        }
        let node = self.nodes[node_id as usize];
        let p = &self.points[node.point];
        if squared_distance(query, p) <= r2 {
            out.push(node.point);
        }
        let axis = node.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.radius_rec(near, query, r2, out);
        if delta * delta <= r2 {
            self.radius_rec(far, query, r2, out);
        }
    }
}
