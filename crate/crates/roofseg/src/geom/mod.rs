//! Geometric primitives: total-least-squares plane fits, point/plane
//! distances, local normal estimation and an exact k-nearest-neighbor index.
//!
//! Determinism contract: every query that could tie on distance breaks the
//! tie by ascending point index, and fitted normals have their sign fixed
//! lexicographically (z >= 0, then y >= 0, then x >= 0), so identical inputs
//! give bit-identical outputs regardless of internal traversal order.

mod kdtree;
mod plane;

pub use kdtree::SpatialIndex;
pub use plane::{
    estimate_normals, fit_plane, local_plane_fits, point_plane_distance, PlaneModel,
};
