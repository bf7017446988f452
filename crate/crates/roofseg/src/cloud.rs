//! Core point-cloud containers shared across the pipeline.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::PlaneModel;

/// Per-point semantic class. The wire encoding (0/1/2) is fixed by the cloud
/// and prediction file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semantic {
    NonRoof,
    Boundary,
    Plane,
}

impl Semantic {
    pub fn code(self) -> u8 {
        match self {
            Semantic::NonRoof => 0,
            Semantic::Boundary => 1,
            Semantic::Plane => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Semantic::NonRoof),
            1 => Some(Semantic::Boundary),
            2 => Some(Semantic::Plane),
            _ => None,
        }
    }
}

/// Ground-truth annotation parallel to a cloud's point array.
///
/// `instance_ids` uses -1 for non-roof points and contiguous ids starting at 0
/// for roof plane instances. `semantics` is present when labels were derived
/// or loaded from a labeled file. `face_planes` holds the analytic plane of
/// each instance and is only populated by the synthetic generator; clouds
/// loaded from files leave it empty.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub instance_ids: Vec<i64>,
    pub semantics: Option<Vec<Semantic>>,
    pub face_planes: Vec<PlaneModel>,
}

impl GroundTruth {
    /// Number of instances, assuming contiguous ids `0..n`.
    pub fn instance_count(&self) -> usize {
        self.instance_ids
            .iter()
            .copied()
            .max()
            .map_or(0, |m| (m + 1).max(0) as usize)
    }
}

/// Similarity transform applied by [`PointCloud::normalize`], stored so the
/// original coordinates can be recovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// Centroid of the cloud before normalization.
    pub centroid: Vector3<f64>,
    /// Maximum distance from the centroid before normalization.
    pub radius: f64,
}

/// A point cloud with optional ground truth.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub gt: Option<GroundTruth>,
    /// Set when this cloud is the output of [`PointCloud::normalize`].
    pub normalization: Option<Normalization>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ground truth or [`Error::MissingGroundTruth`].
    pub fn require_gt(&self) -> Result<&GroundTruth> {
        self.gt.as_ref().ok_or(Error::MissingGroundTruth)
    }

    /// Centroid of all points; zero vector for an empty cloud.
    pub fn centroid(&self) -> Vector3<f64> {
        if self.points.is_empty() {
            return Vector3::zeros();
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        sum / self.points.len() as f64
    }

    /// Translate to the centroid and scale so the farthest point sits at
    /// distance 1. Ground-truth face planes are transformed along with the
    /// points. A cloud that is already normalized maps to itself up to
    /// floating-point error.
    pub fn normalize(&self) -> PointCloud {
        let centroid = self.centroid();
        let radius = self
            .points
            .iter()
            .map(|p| (p.coords - centroid).norm())
            .fold(0.0_f64, f64::max);
        let scale = if radius > 0.0 { radius } else { 1.0 };

        let points = self
            .points
            .iter()
            .map(|p| Point3::from((p.coords - centroid) / scale))
            .collect();
        let gt = self.gt.clone().map(|mut gt| {
            for plane in &mut gt.face_planes {
                *plane = plane.translated_scaled(&centroid, scale);
            }
            gt
        });
        PointCloud {
            points,
            gt,
            normalization: Some(Normalization { centroid, radius: scale }),
        }
    }

    /// Invert [`PointCloud::normalize`] using the stored transform.
    pub fn denormalize(&self) -> PointCloud {
        let Some(n) = self.normalization else {
            return self.clone();
        };
        let points = self
            .points
            .iter()
            .map(|p| Point3::from(p.coords * n.radius + n.centroid))
            .collect();
        let gt = self.gt.clone().map(|mut gt| {
            for plane in &mut gt.face_planes {
                *plane = plane.denormalized(&n.centroid, n.radius);
            }
            gt
        });
        PointCloud {
            points,
            gt,
            normalization: None,
        }
    }
}

/// Dense per-point embedding vectors in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::length_mismatch(
                "embedding data not divisible by dimension",
                data.len(),
                dim,
            ));
        }
        Ok(Embeddings { dim, data })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Embeddings {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Euclidean distance between rows `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Euclidean distance between two raw embedding rows.
pub fn embedding_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
