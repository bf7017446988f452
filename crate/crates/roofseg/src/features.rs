//! Prediction providers: the stand-in for a trained network's three heads.
//!
//! A [`PredictionSet`] carries per-point semantic class, offset-to-center,
//! and an embedding vector. Three providers exist:
//!
//! * [`oracle_predictions`] derives predictions from ground truth and
//!   corrupts them with controllable noise — the ideal-network simulator
//!   every clustering experiment is grounded on. Instances get pairwise
//!   equidistant orthogonal embedding codes, so separation difficulty is a
//!   single knob (noise as a fraction of the inter-code distance). Boundary
//!   points receive doubled offset and embedding noise, reproducing the
//!   premise that features near instance borders are unreliable.
//! * [`handcrafted_predictions`] computes classic local-geometry features
//!   (estimated normal, plane offset, height) with no learning and no
//!   ground truth; offsets are zero.
//! * File-based predictions load through [`crate::io::load_predictions`].

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Embeddings, PointCloud, Semantic};
use crate::error::{Error, Result};
use crate::geom::{estimate_normals, SpatialIndex};
use crate::gtlabel::LabelSet;

/// Default margin used to scale instance codes: codes sit `2 * margin`
/// (= 1.2) apart. The value is tuned to the default clustering budget
/// (radius 0.5, weights 0.1/0.9) at the reference noise level
/// `embedding_sigma = 0.3`: plane points (expected pair distance
/// `0.3 * 1.2 = 0.36`) link comfortably, distinct codes (`1.2`) stay far
/// outside the budget, and boundary points — whose noise is doubled —
/// straddle the linking threshold, which is exactly the ambiguity the
/// boundary-aware pipeline exists to absorb.
pub const DEFAULT_CODE_MARGIN: f64 = 0.6;

/// Per-point predictions, arrays parallel to the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub semantic: Vec<Semantic>,
    pub offsets: Vec<Vector3<f64>>,
    pub embeddings: Embeddings,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Validate that all arrays match the expected point count.
    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.semantic.len() != n {
            return Err(Error::length_mismatch("semantics vs cloud", self.semantic.len(), n));
        }
        if self.offsets.len() != n {
            return Err(Error::length_mismatch("offsets vs cloud", self.offsets.len(), n));
        }
        if self.embeddings.len() != n {
            return Err(Error::length_mismatch(
                "embeddings vs cloud",
                self.embeddings.len(),
                n,
            ));
        }
        Ok(())
    }
}

/// Noise model for the oracle provider. All scales are relative: offsets in
/// fractions of the cloud radius, embeddings in fractions of the inter-code
/// distance.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub offset_sigma: f64,
    pub embedding_sigma: f64,
    pub semantic_flip_rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Noise-free spec (the seed is irrelevant but kept for uniformity).
    pub fn zero(seed: u64) -> Self {
        NoiseSpec {
            offset_sigma: 0.0,
            embedding_sigma: 0.0,
            semantic_flip_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.offset_sigma >= 0.0) || !(self.embedding_sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "noise sigmas must be non-negative, got offset={} embedding={}",
                self.offset_sigma, self.embedding_sigma
            )));
        }
        if !(0.0..0.5).contains(&self.semantic_flip_rate) {
            return Err(Error::InvalidSpec(format!(
                "semantic_flip_rate must be in [0, 0.5), got {}",
                self.semantic_flip_rate
            )));
        }
        Ok(())
    }
}

/// Maximum distance from the centroid; the scale offset noise is relative
/// to. Equals 1 for normalized clouds.
fn cloud_radius(cloud: &PointCloud) -> f64 {
    let centroid = cloud.centroid();
    cloud
        .points
        .iter()
        .map(|p| (p.coords - centroid).norm())
        .fold(0.0, f64::max)
}

/// Ground-truth-derived predictions with controllable corruption, using the
/// default code margin. See [`oracle_predictions_scaled`].
pub fn oracle_predictions(
    cloud: &PointCloud,
    labels: &LabelSet,
    noise: &NoiseSpec,
    embed_dim: usize,
) -> Result<PredictionSet> {
    oracle_predictions_scaled(cloud, labels, noise, embed_dim, DEFAULT_CODE_MARGIN)
}

/// Ground-truth-derived predictions with controllable corruption.
///
/// Instance `i` gets the code `sqrt(2) * code_margin * e_i`, so distinct
/// codes are pairwise `2 * code_margin` apart. Embedding noise is drawn so
/// the expected *pair* distance between two same-instance points equals
/// `embedding_sigma` times that inter-code distance regardless of the
/// dimension (per-component sigma `embedding_sigma * inter_code /
/// sqrt(2 * dim)`); offset noise is iid per component with sigma
/// `offset_sigma * cloud radius`. Boundary points get both noises doubled.
/// Semantic labels flip independently to a uniformly chosen different
/// class at `semantic_flip_rate`.
pub fn oracle_predictions_scaled(
    cloud: &PointCloud,
    labels: &LabelSet,
    noise: &NoiseSpec,
    embed_dim: usize,
    code_margin: f64,
) -> Result<PredictionSet> {
    noise.validate()?;
    if !(code_margin > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "code_margin must be positive, got {code_margin}"
        )));
    }
    let gt = cloud.require_gt()?;
    let n = cloud.len();
    if labels.semantic.len() != n || labels.offset.len() != n {
        return Err(Error::length_mismatch("labels vs cloud", labels.semantic.len(), n));
    }
    let instances = gt.instance_count();
    if instances > embed_dim {
        return Err(Error::TooManyInstances {
            instances,
            dim: embed_dim,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    // Pass 1: semantic flips.
    let mut semantic = labels.semantic.clone();
    if noise.semantic_flip_rate > 0.0 {
        let all = [Semantic::NonRoof, Semantic::Boundary, Semantic::Plane];
        for s in &mut semantic {
            if rng.random::<f64>() < noise.semantic_flip_rate {
                let others: Vec<Semantic> = all.iter().copied().filter(|c| c != s).collect();
                *s = others[rng.random_range(0..others.len())];
            }
        }
    }

    // Pass 2: offsets. Noise scale doubles on ground-truth boundary points.
    let mut offsets = labels.offset.clone();
    if noise.offset_sigma > 0.0 {
        let sigma = noise.offset_sigma * cloud_radius(cloud);
        let dist = Normal::new(0.0, sigma).expect("validated sigma");
        for (o, s) in offsets.iter_mut().zip(&labels.semantic) {
            let factor = if *s == Semantic::Boundary { 2.0 } else { 1.0 };
            o.x += factor * dist.sample(&mut rng);
            o.y += factor * dist.sample(&mut rng);
            o.z += factor * dist.sample(&mut rng);
        }
    }

    // Pass 3: embeddings. Codes for roof instances, zero for non-roof.
    let code_len = std::f64::consts::SQRT_2 * code_margin;
    let inter_code = 2.0 * code_margin;
    let mut data = vec![0.0; n * embed_dim];
    for (i, &id) in labels.instance_id.iter().enumerate() {
        if id >= 0 {
            data[i * embed_dim + id as usize] = code_len;
        }
    }
    let mut embeddings = Embeddings::new(embed_dim, data)?;
    if noise.embedding_sigma > 0.0 {
        // Per-component sigma so the expected same-instance pair distance
        // is embedding_sigma * inter_code independent of the dimension.
        let sigma = noise.embedding_sigma * inter_code / (2.0 * embed_dim as f64).sqrt();
        let dist = Normal::new(0.0, sigma).expect("validated sigma");
        for i in 0..n {
            let factor = if labels.semantic[i] == Semantic::Boundary { 2.0 } else { 1.0 };
            for x in embeddings.row_mut(i) {
                *x += factor * dist.sample(&mut rng);
            }
        }
    }

    Ok(PredictionSet {
        semantic,
        offsets,
        embeddings,
    })
}

/// Angle above which a neighborhood's normal spread marks a boundary point.
const SPREAD_LIMIT_DEG: f64 = 20.0;

/// Learning-free predictions from local geometry.
///
/// Embedding layout: estimated unit normal (3), plane offset `n . p` (1),
/// height z (1), zero-padded to `embed_dim`. Offsets are zero — without
/// learning there is no center knowledge. A point is Boundary when the
/// estimated normals across its k-neighborhood disagree by more than 20
/// degrees.
pub fn handcrafted_predictions(
    cloud: &PointCloud,
    k: usize,
    embed_dim: usize,
) -> Result<PredictionSet> {
    if k < 3 {
        return Err(Error::InvalidSpec(format!("k must be at least 3, got {k}")));
    }
    if embed_dim < 5 {
        return Err(Error::InvalidSpec(format!(
            "embed_dim must be at least 5 to hold the handcrafted features, got {embed_dim}"
        )));
    }
    let n = cloud.len();
    let mut normals = estimate_normals(&cloud.points, k);
    // Degenerate neighborhoods (collinear, too small) estimate to zero;
    // substitute straight-up so the first three components stay unit-norm.
    for nrm in &mut normals {
        if nrm.norm() == 0.0 {
            *nrm = Vector3::z();
        }
    }

    let index = SpatialIndex::build(&cloud.points);
    let spread_cos = (SPREAD_LIMIT_DEG.to_radians()).cos();
    let mut semantic = Vec::with_capacity(n);
    let mut data = vec![0.0; n * embed_dim];
    for (i, p) in cloud.points.iter().enumerate() {
        let row = &mut data[i * embed_dim..(i + 1) * embed_dim];
        row[..3].copy_from_slice(normals[i].as_slice());
        row[3] = normals[i].dot(&p.coords);
        row[4] = p.z;

        // Max pairwise angle over neighborhood normals: above the limit iff
        // some pair's cosine drops below cos(limit).
        let hood: Vec<usize> = index
            .knn(p, k + 1)
            .into_iter()
            .filter(|&j| j != i)
            .take(k)
            .collect();
        let mut boundary = false;
        'pairs: for (a, &ja) in hood.iter().enumerate() {
            for &jb in hood.iter().skip(a + 1) {
                if normals[ja].dot(&normals[jb]) < spread_cos {
                    boundary = true;
                    break 'pairs;
                }
            }
        }
        semantic.push(if boundary { Semantic::Boundary } else { Semantic::Plane });
    }

    Ok(PredictionSet {
        semantic,
        offsets: vec![Vector3::zeros(); n],
        embeddings: Embeddings::new(embed_dim, data)?,
    })
}
