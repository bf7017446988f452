//! Boundary-aware roof plane segmentation for airborne LiDAR point clouds.
//!
//! The crate covers the full experimental loop for plane-instance segmentation
//! of building roofs:
//!
//! * [`synthgen`] generates synthetic roof point clouds from parametric
//!   building families with exact per-face ground truth.
//! * [`gtlabel`] derives per-point training labels (semantic class, offset to
//!   the instance center) from ground-truth instance ids.
//! * [`features`] produces per-point predictions (semantic class, center
//!   offset, embedding vector) from pluggable providers; the noisy oracle
//!   provider stands in for a trained network with controllable error.
//! * [`cluster`] groups points by flood fill in the joint space of shifted
//!   coordinates and embeddings.
//! * [`refine`] assigns boundary and leftover points to clusters by plane
//!   distance plus embedding distance.
//! * [`metrics`] scores segmentations (coverage, weighted coverage,
//!   precision/recall at IoU 0.5).
//! * [`baselines`] holds classical competitors (sequential RANSAC, normal
//!   based region growing).
//! * [`losses`] are the training loss kernels with analytic gradients.
//! * [`pipeline`] wires the stages together and defines ablation variants.
//! * [`io`] and [`config`] are the file formats and runtime configuration.
//!
//! All randomized operations take explicit seeds and are deterministic across
//! runs on the same platform.

pub mod baselines;
pub mod cloud;
pub mod cluster;
pub mod config;
pub mod error;
pub mod features;
pub mod geom;
pub mod gtlabel;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod synthgen;

pub use cloud::{Embeddings, GroundTruth, Normalization, PointCloud, Semantic};
pub use error::{Error, Result};
pub use geom::{PlaneModel, SpatialIndex};
