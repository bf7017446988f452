//! Synthetic building generator.
//!
//! Six parametric roof families (2–6 planar faces) are built as exact
//! analytic models — planar polygon faces, their triangulations, and the
//! ridge/valley segments shared by adjacent faces — and then sampled into
//! labeled point clouds. Sampling is uniform by area across all faces, so
//! per-face point counts are proportional to face area. Geometric noise is
//! isotropic Gaussian applied after sampling.
//!
//! Conventions: buildings sit on the ground plane `z = 0`, eaves at
//! `eave_height`, the highest ridge at `ridge_height`. All randomness is
//! drawn from a ChaCha8 stream seeded by the spec, so equal inputs produce
//! bit-identical clouds.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{GroundTruth, PointCloud, Semantic};
use crate::error::{Error, Result};
use crate::geom::PlaneModel;

/// Parametric roof family. The number in parentheses is the face count:
/// Gable (2), Saltbox (2), Hip (4), Pyramid (4), MansardLike (4),
/// CrossGable (6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoofFamily {
    Gable,
    Saltbox,
    Hip,
    Pyramid,
    MansardLike,
    CrossGable,
}

impl RoofFamily {
    pub const ALL: [RoofFamily; 6] = [
        RoofFamily::Gable,
        RoofFamily::Saltbox,
        RoofFamily::Hip,
        RoofFamily::Pyramid,
        RoofFamily::MansardLike,
        RoofFamily::CrossGable,
    ];

    /// Number of planar faces (= plane instances) the family produces.
    pub fn face_count(self) -> usize {
        match self {
            RoofFamily::Gable | RoofFamily::Saltbox => 2,
            RoofFamily::Hip | RoofFamily::Pyramid | RoofFamily::MansardLike => 4,
            RoofFamily::CrossGable => 6,
        }
    }

    /// Family-specific shape ratios, all in the open interval (0, 1).
    ///
    /// Gable, Pyramid: none. Saltbox: ridge position across the width.
    /// Hip: ridge length as a fraction of the width. MansardLike: slope-break
    /// position (fraction of the half-width from the ridge) and break height
    /// (fraction of eave-to-ridge rise). CrossGable: main-block depth
    /// fraction, wing width fraction, wing ridge height fraction.
    pub fn default_ratios(self) -> Vec<f64> {
        match self {
            RoofFamily::Gable | RoofFamily::Pyramid => vec![],
            RoofFamily::Saltbox => vec![0.35],
            RoofFamily::Hip => vec![0.5],
            RoofFamily::MansardLike => vec![0.5, 0.7],
            RoofFamily::CrossGable => vec![0.6, 0.5, 0.6],
        }
    }

    pub fn ratio_count(self) -> usize {
        self.default_ratios().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            RoofFamily::Gable => "gable",
            RoofFamily::Saltbox => "saltbox",
            RoofFamily::Hip => "hip",
            RoofFamily::Pyramid => "pyramid",
            RoofFamily::MansardLike => "mansard",
            RoofFamily::CrossGable => "crossgable",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        RoofFamily::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Full description of one synthetic building.
#[derive(Debug, Clone)]
pub struct RoofSpec {
    pub family: RoofFamily,
    /// Footprint extent along x, meters.
    pub width: f64,
    /// Footprint extent along y, meters.
    pub depth: f64,
    pub eave_height: f64,
    pub ridge_height: f64,
    /// Family-specific shape ratios; empty means family defaults.
    pub ratios: Vec<f64>,
    pub seed: u64,
}

impl RoofSpec {
    pub fn new(
        family: RoofFamily,
        width: f64,
        depth: f64,
        eave_height: f64,
        ridge_height: f64,
        seed: u64,
    ) -> Self {
        RoofSpec {
            family,
            width,
            depth,
            eave_height,
            ridge_height,
            ratios: Vec::new(),
            seed,
        }
    }

    /// A building with dimensions drawn from realistic ranges (footprint
    /// 8–16 m by 6–14 m, eaves 3–6 m, rise 2–5 m), fully determined by
    /// `seed`. Shape ratios stay at family defaults except for cross
    /// gables, whose wings are drawn wide enough that no face falls below
    /// roughly an eighth of the roof area; sampled corpora should never
    /// contain faces too small to resolve at a few thousand points.
    pub fn sampled(family: RoofFamily, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = rng.random_range(8.0..16.0);
        let depth = rng.random_range(6.0..14.0);
        let eave_height = rng.random_range(3.0..6.0);
        let rise = rng.random_range(2.0..5.0);
        let ratios = match family {
            RoofFamily::CrossGable => vec![
                rng.random_range(0.40..0.50),
                rng.random_range(0.80..0.95),
                rng.random_range(0.70..0.85),
            ],
            _ => Vec::new(),
        };
        RoofSpec {
            family,
            width,
            depth,
            eave_height,
            ridge_height: eave_height + rise,
            ratios,
            seed: rng.random(),
        }
    }

    /// The ratios actually used: the stored ones, or family defaults when
    /// none were given.
    pub fn effective_ratios(&self) -> Result<Vec<f64>> {
        let ratios = if self.ratios.is_empty() {
            self.family.default_ratios()
        } else {
            self.ratios.clone()
        };
        if ratios.len() != self.family.ratio_count() {
            return Err(Error::InvalidSpec(format!(
                "{} expects {} shape ratios, got {}",
                self.family.name(),
                self.family.ratio_count(),
                ratios.len()
            )));
        }
        if let Some(r) = ratios.iter().find(|r| !(0.0 < **r && **r < 1.0)) {
            return Err(Error::InvalidSpec(format!(
                "shape ratio {r} outside the open interval (0, 1)"
            )));
        }
        Ok(ratios)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("width", self.width),
            ("depth", self.depth),
            ("eave_height", self.eave_height),
            ("ridge_height", self.ridge_height),
        ];
        for (name, v) in dims {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        // A flat or inverted roof collapses the faces into one plane.
        if self.ridge_height <= self.eave_height {
            return Err(Error::InvalidSpec(format!(
                "ridge_height {} must exceed eave_height {}",
                self.ridge_height, self.eave_height
            )));
        }
        self.effective_ratios()?;
        Ok(())
    }

    /// Default geometric noise: 1% of the footprint diagonal.
    pub fn default_noise_sigma(&self) -> f64 {
        0.01 * (self.width * self.width + self.depth * self.depth).sqrt()
    }

    /// Construct the analytic model (faces, triangulation, shared edges).
    pub fn build_model(&self) -> Result<RoofModel> {
        self.validate()?;
        let ratios = self.effective_ratios()?;
        let (w, d) = (self.width, self.depth);
        let (he, hr) = (self.eave_height, self.ridge_height);
        let model = match self.family {
            RoofFamily::Gable => gable_model(w, d, he, hr, -w / 2.0 + w / 2.0),
            RoofFamily::Saltbox => gable_model(w, d, he, hr, -w / 2.0 + ratios[0] * w),
            RoofFamily::Hip => hip_model(w, d, he, hr, ratios[0]),
            RoofFamily::Pyramid => pyramid_model(w, d, he, hr),
            RoofFamily::MansardLike => mansard_model(w, d, he, hr, ratios[0], ratios[1]),
            RoofFamily::CrossGable => cross_gable_model(w, d, he, hr, &ratios),
        };
        Ok(model)
    }
}

/// One planar roof face: its boundary polygon, a triangulation of it, the
/// exact plane, and the surface area.
#[derive(Debug, Clone)]
pub struct RoofFace {
    pub vertices: Vec<Point3<f64>>,
    /// Index triples into `vertices`; the triangles tile the polygon.
    pub triangles: Vec<[usize; 3]>,
    pub plane: PlaneModel,
    pub area: f64,
}

/// A ridge or valley segment along which two faces meet.
#[derive(Debug, Clone)]
pub struct SharedEdge {
    pub faces: (usize, usize),
    pub start: Point3<f64>,
    pub end: Point3<f64>,
}

/// Analytic building model; face index = instance id.
#[derive(Debug, Clone)]
pub struct RoofModel {
    pub faces: Vec<RoofFace>,
    pub shared_edges: Vec<SharedEdge>,
}

impl RoofModel {
    pub fn total_area(&self) -> f64 {
        self.faces.iter().map(|f| f.area).sum()
    }
}

fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Build a face from its boundary polygon by fanning triangles out of
/// `anchor`. The anchor must see the whole polygon; for our faces the only
/// non-convex polygon is the notched cross-gable heptagon, which is
/// star-shaped from its single reflex vertex (the valley apex).
fn polygon_face(vertices: Vec<Point3<f64>>, anchor: usize) -> RoofFace {
    let n = vertices.len();
    assert!(n >= 3 && anchor < n);
    let mut triangles = Vec::with_capacity(n - 2);
    let mut area = 0.0;
    for i in 0..n - 2 {
        let tri = [anchor, (anchor + 1 + i) % n, (anchor + 2 + i) % n];
        area += triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
        triangles.push(tri);
    }
    // Newell's method: robust polygon normal independent of the anchor.
    let mut normal = Vector3::zeros();
    for i in 0..n {
        let p = &vertices[i];
        let q = &vertices[(i + 1) % n];
        normal.x += (p.y - q.y) * (p.z + q.z);
        normal.y += (p.z - q.z) * (p.x + q.x);
        normal.z += (p.x - q.x) * (p.y + q.y);
    }
    let plane = PlaneModel::from_point_normal(&vertices[0], &normal)
        .expect("roof face polygons are non-degenerate by construction");
    RoofFace {
        vertices,
        triangles,
        plane,
        area,
    }
}

fn quad(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, d: Point3<f64>) -> RoofFace {
    polygon_face(vec![a, b, c, d], 0)
}

fn tri_face(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>) -> RoofFace {
    polygon_face(vec![a, b, c], 0)
}

fn pt(x: f64, y: f64, z: f64) -> Point3<f64> {
    Point3::new(x, y, z)
}

/// Two-face roof with the ridge parallel to y at `x = xr`. Gable has the
/// ridge centered; Saltbox shifts it, giving the two faces unequal slopes.
fn gable_model(w: f64, d: f64, he: f64, hr: f64, xr: f64) -> RoofModel {
    let (hw, hd) = (w / 2.0, d / 2.0);
    let faces = vec![
        quad(pt(-hw, -hd, he), pt(xr, -hd, hr), pt(xr, hd, hr), pt(-hw, hd, he)),
        quad(pt(hw, -hd, he), pt(hw, hd, he), pt(xr, hd, hr), pt(xr, -hd, hr)),
    ];
    let shared_edges = vec![SharedEdge {
        faces: (0, 1),
        start: pt(xr, -hd, hr),
        end: pt(xr, hd, hr),
    }];
    RoofModel { faces, shared_edges }
}

/// Four-face hip roof: ridge along x of length `ridge_ratio * w`, two
/// trapezoids on the long sides, two triangles on the hip ends.
fn hip_model(w: f64, d: f64, he: f64, hr: f64, ridge_ratio: f64) -> RoofModel {
    let (hw, hd) = (w / 2.0, d / 2.0);
    let xr = ridge_ratio * hw;
    let faces = vec![
        quad(pt(-hw, -hd, he), pt(hw, -hd, he), pt(xr, 0.0, hr), pt(-xr, 0.0, hr)),
        quad(pt(hw, hd, he), pt(-hw, hd, he), pt(-xr, 0.0, hr), pt(xr, 0.0, hr)),
        tri_face(pt(-hw, -hd, he), pt(-xr, 0.0, hr), pt(-hw, hd, he)),
        tri_face(pt(hw, -hd, he), pt(hw, hd, he), pt(xr, 0.0, hr)),
    ];
    let edge = |faces, start, end| SharedEdge { faces, start, end };
    let shared_edges = vec![
        edge((0, 1), pt(-xr, 0.0, hr), pt(xr, 0.0, hr)),
        edge((0, 2), pt(-hw, -hd, he), pt(-xr, 0.0, hr)),
        edge((0, 3), pt(hw, -hd, he), pt(xr, 0.0, hr)),
        edge((1, 2), pt(-hw, hd, he), pt(-xr, 0.0, hr)),
        edge((1, 3), pt(hw, hd, he), pt(xr, 0.0, hr)),
    ];
    RoofModel { faces, shared_edges }
}

/// Four triangles meeting at a central apex.
fn pyramid_model(w: f64, d: f64, he: f64, hr: f64) -> RoofModel {
    let (hw, hd) = (w / 2.0, d / 2.0);
    let apex = pt(0.0, 0.0, hr);
    let c = [
        pt(-hw, -hd, he),
        pt(hw, -hd, he),
        pt(hw, hd, he),
        pt(-hw, hd, he),
    ];
    let faces = vec![
        tri_face(c[0], c[1], apex),
        tri_face(c[1], c[2], apex),
        tri_face(c[2], c[3], apex),
        tri_face(c[3], c[0], apex),
    ];
    let shared_edges = (0..4)
        .map(|i| SharedEdge {
            faces: (i, (i + 1) % 4),
            start: c[(i + 1) % 4],
            end: apex,
        })
        .collect();
    RoofModel { faces, shared_edges }
}

/// Gable-like roof with a slope break on each side: steep lower faces from
/// the eave to the break line, shallower upper faces to the ridge.
fn mansard_model(w: f64, d: f64, he: f64, hr: f64, break_pos: f64, break_height: f64) -> RoofModel {
    let (hw, hd) = (w / 2.0, d / 2.0);
    let xb = break_pos * hw;
    let hb = he + break_height * (hr - he);
    let faces = vec![
        quad(pt(-hw, -hd, he), pt(-xb, -hd, hb), pt(-xb, hd, hb), pt(-hw, hd, he)),
        quad(pt(-xb, -hd, hb), pt(0.0, -hd, hr), pt(0.0, hd, hr), pt(-xb, hd, hb)),
        quad(pt(xb, -hd, hb), pt(xb, hd, hb), pt(0.0, hd, hr), pt(0.0, -hd, hr)),
        quad(pt(hw, -hd, he), pt(hw, hd, he), pt(xb, hd, hb), pt(xb, -hd, hb)),
    ];
    let edge = |faces, start, end| SharedEdge { faces, start, end };
    let shared_edges = vec![
        edge((0, 1), pt(-xb, -hd, hb), pt(-xb, hd, hb)),
        edge((1, 2), pt(0.0, -hd, hr), pt(0.0, hd, hr)),
        edge((2, 3), pt(xb, -hd, hb), pt(xb, hd, hb)),
    ];
    RoofModel { faces, shared_edges }
}

/// Plus-shaped cross gable: a main gable (ridge along x) with a lower wing
/// gable (ridge along y) protruding front and back. Each wing roof dies into
/// the main slope along two valleys that meet at the point where the wing
/// ridge pierces the main face. The main faces are notched heptagons; the
/// four wing faces are quads.
fn cross_gable_model(w: f64, d: f64, he: f64, hr: f64, ratios: &[f64]) -> RoofModel {
    let (main_depth, wing_width, wing_ridge) = (ratios[0], ratios[1], ratios[2]);
    let hw = w / 2.0;
    let hd = d / 2.0;
    let hm = main_depth * hd; // main block half-depth
    let hww = wing_width * hw; // wing half-width
    let hrw = he + wing_ridge * (hr - he); // wing ridge height
    // The wing ridge (z = hrw) meets the main surface z = hr - (hr-he)|y|/hm
    // at |y| = yv; the two valleys run from that apex to the points where the
    // wing eaves cross the main eave line.
    let yv = (hr - hrw) / (hr - he) * hm;
    let vf = pt(0.0, -yv, hrw);
    let vb = pt(0.0, yv, hrw);

    let front = polygon_face(
        vec![
            pt(-hw, -hm, he),
            pt(-hww, -hm, he),
            vf,
            pt(hww, -hm, he),
            pt(hw, -hm, he),
            pt(hw, 0.0, hr),
            pt(-hw, 0.0, hr),
        ],
        2,
    );
    let back = polygon_face(
        vec![
            pt(hw, hm, he),
            pt(hww, hm, he),
            vb,
            pt(-hww, hm, he),
            pt(-hw, hm, he),
            pt(-hw, 0.0, hr),
            pt(hw, 0.0, hr),
        ],
        2,
    );
    let faces = vec![
        front,
        back,
        quad(pt(-hww, -hd, he), pt(-hww, -hm, he), vf, pt(0.0, -hd, hrw)),
        quad(pt(hww, -hd, he), pt(0.0, -hd, hrw), vf, pt(hww, -hm, he)),
        quad(pt(-hww, hd, he), pt(0.0, hd, hrw), vb, pt(-hww, hm, he)),
        quad(pt(hww, hd, he), pt(hww, hm, he), vb, pt(0.0, hd, hrw)),
    ];
    let edge = |faces, start, end| SharedEdge { faces, start, end };
    let shared_edges = vec![
        edge((0, 1), pt(-hw, 0.0, hr), pt(hw, 0.0, hr)),
        edge((0, 2), pt(-hww, -hm, he), vf),
        edge((0, 3), pt(hww, -hm, he), vf),
        edge((2, 3), pt(0.0, -hd, hrw), vf),
        edge((1, 4), pt(-hww, hm, he), vb),
        edge((1, 5), pt(hww, hm, he), vb),
        edge((4, 5), pt(0.0, hd, hrw), vb),
    ];
    RoofModel { faces, shared_edges }
}

/// Sample `n_points` over the roof faces of `spec`, area-proportionally,
/// then add isotropic Gaussian noise of the given sigma. Instance ids follow
/// the source face; the exact analytic planes are stored in the ground truth.
pub fn generate_building(spec: &RoofSpec, n_points: usize, noise_sigma: f64) -> Result<PointCloud> {
    let model = spec.build_model()?;
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    if n_points < 4 * model.faces.len() {
        return Err(Error::InvalidSpec(format!(
            "n_points {} below minimum {} (4 per face)",
            n_points,
            4 * model.faces.len()
        )));
    }

    // Flatten triangles across faces and build the cumulative area table.
    let mut tris: Vec<(usize, [Point3<f64>; 3])> = Vec::new();
    for (face_id, face) in model.faces.iter().enumerate() {
        for t in &face.triangles {
            tris.push((
                face_id,
                [face.vertices[t[0]], face.vertices[t[1]], face.vertices[t[2]]],
            ));
        }
    }
    let mut cumulative = Vec::with_capacity(tris.len());
    let mut total = 0.0;
    for (_, [a, b, c]) in &tris {
        total += triangle_area(a, b, c);
        cumulative.push(total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::with_capacity(n_points);
    let mut instance_ids = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let u: f64 = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(tris.len() - 1);
        let (face_id, [a, b, c]) = &tris[idx];
        // Square-root warp maps the unit square uniformly onto the triangle.
        let s = rng.random::<f64>().sqrt();
        let t: f64 = rng.random();
        let p = a.coords * (1.0 - s) + b.coords * (s * (1.0 - t)) + c.coords * (s * t);
        points.push(Point3::from(p));
        instance_ids.push(*face_id as i64);
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma validated above");
        for p in &mut points {
            p.x += normal.sample(&mut rng);
            p.y += normal.sample(&mut rng);
            p.z += normal.sample(&mut rng);
        }
    }

    Ok(PointCloud {
        points,
        gt: Some(GroundTruth {
            instance_ids,
            semantics: None,
            face_planes: model.faces.iter().map(|f| f.plane.clone()).collect(),
        }),
        normalization: None,
    })
}

/// Append `floor(fraction * len)` non-roof points: half uniform under the
/// roof (facade/clutter proxy, between the ground plane and the lowest roof
/// point), half uniform in the bounding box inflated by 1.5x (outlier
/// proxy). Existing points and labels are untouched.
pub fn add_nonroof_clutter(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<PointCloud> {
    let gt = cloud.require_gt()?;
    let mut out = cloud.clone();
    let m = (fraction.max(0.0) * cloud.len() as f64).floor() as usize;
    if m == 0 || cloud.is_empty() {
        return Ok(out);
    }
    let n_facade = m / 2;
    let n_outlier = m - n_facade;

    let mut lo = cloud.points[0];
    let mut hi = cloud.points[0];
    for p in &cloud.points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    // Facade band: generator clouds sit above the ground plane z = 0, so the
    // band runs from the ground to the lowest roof point. If the cloud was
    // shifted below zero, fall back to one bbox-height under it.
    let z_top = lo.z;
    let z_bottom = if z_top > 0.0 { 0.0 } else { z_top - (hi.z - lo.z).max(1e-9) };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |a: f64, b: f64| -> f64 {
        if b > a {
            rng.random_range(a..b)
        } else {
            a
        }
    };
    let mut added = Vec::with_capacity(m);
    for _ in 0..n_facade {
        let x = uniform(lo.x, hi.x);
        let y = uniform(lo.y, hi.y);
        let z = uniform(z_bottom, z_top);
        added.push(pt(x, y, z));
    }
    let center = (lo.coords + hi.coords) / 2.0;
    let half = (hi.coords - lo.coords) / 2.0 * 1.5;
    for _ in 0..n_outlier {
        let x = uniform(center.x - half.x, center.x + half.x);
        let y = uniform(center.y - half.y, center.y + half.y);
        let z = uniform(center.z - half.z, center.z + half.z);
        added.push(pt(x, y, z));
    }

    out.points.extend(added);
    let out_gt = out.gt.as_mut().expect("cloned from checked gt");
    out_gt.instance_ids.extend(std::iter::repeat(-1).take(m));
    if let Some(sem) = out_gt.semantics.as_mut() {
        sem.extend(std::iter::repeat(Semantic::NonRoof).take(m));
    }
    let _ = gt;
    Ok(out)
}
