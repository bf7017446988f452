//! Plain-text file formats: point clouds, predictions, segmentations and
//! dataset manifests.
//!
//! All four formats share the same conventions: `#` starts a comment line,
//! blank lines are ignored, the first significant line is a header naming
//! the format and version plus the expected record counts, and floats are
//! written in Rust's shortest round-trip decimal form so save → load → save
//! reproduces files byte for byte. Writes go through a temporary file in
//! the target directory followed by an atomic rename, so interrupted runs
//! never leave truncated artifacts.
//!
//! | format | header | record line |
//! |---|---|---|
//! | cloud | `pointcloud v1 N=<n> [labeled]` | `x y z [instance_id semantic]` |
//! | predictions | `predictions v1 N=<n> D=<d>` | `semantic dx dy dz f_1 … f_D` |
//! | segmentation | `segmentation v1 N=<n> M=<m>` | `<instance id or -1>` |
//! | manifest | (none) | `<building_id> <relative_path> <train\|test>` |
//!
//! A labeled cloud line carries the ground-truth instance id (−1 for
//! non-roof) and semantic class (0 non-roof, 1 boundary, 2 plane). Clouds
//! whose ground truth lacks stored semantics are written with the id-sign
//! default (plane for ids ≥ 0, non-roof otherwise); analytic face planes
//! are not serialized.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};

use crate::cloud::{Embeddings, GroundTruth, PointCloud, Semantic};
use crate::cluster::Segmentation;
use crate::error::{Error, Result};
use crate::features::PredictionSet;

/// Dataset role of one building in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One manifest row: a building and where its cloud file lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Identifier token (no whitespace).
    pub building_id: String,
    /// Path relative to the manifest's directory.
    pub path: PathBuf,
    pub split: Split,
}

/// Write `content` to `path` atomically (temp file + rename), so an
/// interrupted run never leaves a truncated file behind.
pub fn save_text(path: impl AsRef<Path>, content: &str) -> Result<()> {
    write_atomic(path.as_ref(), content)
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Significant lines of a file with their 1-based line numbers.
fn significant_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_count(path: &Path, line_no: usize, token: &str, key: &str) -> Result<usize> {
    token
        .strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| {
            Error::format(
                path,
                Some(line_no),
                format!("expected {key}=<count>, got {token:?}"),
            )
        })
}

fn parse_f64(path: &Path, line_no: usize, token: &str, what: &str) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| {
        Error::format(path, Some(line_no), format!("bad {what} value {token:?}"))
    })?;
    if !v.is_finite() {
        return Err(Error::format(
            path,
            Some(line_no),
            format!("non-finite {what} value {token:?}"),
        ));
    }
    Ok(v)
}

fn parse_i64(path: &Path, line_no: usize, token: &str, what: &str) -> Result<i64> {
    token.parse().map_err(|_| {
        Error::format(path, Some(line_no), format!("bad {what} value {token:?}"))
    })
}

fn ensure_finite(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::format(
            path,
            None,
            "refusing to write non-finite values",
        ));
    }
    Ok(())
}

/// Save a cloud; ground truth, when present, adds the `labeled` header
/// token and per-line id + semantic columns.
pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    ensure_finite(
        path,
        cloud.points.iter().flat_map(|p| [p.x, p.y, p.z]),
    )?;
    let gt = cloud.gt.as_ref();
    if let Some(gt) = gt {
        if gt.instance_ids.len() != cloud.len() {
            return Err(Error::length_mismatch(
                "points vs instance ids",
                cloud.len(),
                gt.instance_ids.len(),
            ));
        }
    }
    let mut out = String::new();
    writeln!(
        out,
        "pointcloud v1 N={}{}",
        cloud.len(),
        if gt.is_some() { " labeled" } else { "" }
    )
    .unwrap();
    for (i, p) in cloud.points.iter().enumerate() {
        match gt {
            Some(gt) => {
                let id = gt.instance_ids[i];
                let semantic = match &gt.semantics {
                    Some(sem) => sem[i],
                    None if id >= 0 => Semantic::Plane,
                    None => Semantic::NonRoof,
                };
                writeln!(out, "{} {} {} {} {}", p.x, p.y, p.z, id, semantic.code()).unwrap();
            }
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap(),
        }
    }
    write_atomic(path, &out)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    let mut lines = significant_lines(&content);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, None, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 3 || tokens[0] != "pointcloud" || tokens[1] != "v1" {
        return Err(Error::format(
            path,
            Some(hline),
            format!("expected `pointcloud v1 N=<n> [labeled]`, got {header:?}"),
        ));
    }
    let n = parse_count(path, hline, tokens[2], "N")?;
    let labeled = match tokens.get(3) {
        None => false,
        Some(&"labeled") => true,
        Some(other) => {
            return Err(Error::format(
                path,
                Some(hline),
                format!("unexpected header token {other:?}"),
            ))
        }
    };

    let mut points = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(if labeled { n } else { 0 });
    let mut semantics = Vec::with_capacity(if labeled { n } else { 0 });
    let want_fields = if labeled { 5 } else { 3 };
    for (line_no, line) in lines {
        if points.len() == n {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("more than the declared N={n} points"),
            ));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != want_fields {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("expected {want_fields} fields, got {}", fields.len()),
            ));
        }
        points.push(Point3::new(
            parse_f64(path, line_no, fields[0], "x")?,
            parse_f64(path, line_no, fields[1], "y")?,
            parse_f64(path, line_no, fields[2], "z")?,
        ));
        if labeled {
            ids.push(parse_i64(path, line_no, fields[3], "instance id")?);
            let code = parse_i64(path, line_no, fields[4], "semantic")?;
            let semantic = u8::try_from(code)
                .ok()
                .and_then(Semantic::from_code)
                .ok_or_else(|| {
                    Error::format(
                        path,
                        Some(line_no),
                        format!("semantic class must be 0, 1 or 2, got {code}"),
                    )
                })?;
            semantics.push(semantic);
        }
    }
    if points.len() != n {
        return Err(Error::format(
            path,
            None,
            format!("declared N={n} points but found {}", points.len()),
        ));
    }
    let gt = labeled.then(|| GroundTruth {
        instance_ids: ids,
        semantics: Some(semantics),
        face_planes: Vec::new(),
    });
    Ok(PointCloud {
        points,
        gt,
        normalization: None,
    })
}

pub fn save_predictions(path: impl AsRef<Path>, preds: &PredictionSet) -> Result<()> {
    let path = path.as_ref();
    let n = preds.len();
    let d = preds.embed_dim();
    ensure_finite(
        path,
        preds
            .offsets
            .iter()
            .flat_map(|o| [o.x, o.y, o.z])
            .chain(preds.embeddings.data().iter().copied()),
    )?;
    let mut out = String::new();
    writeln!(out, "predictions v1 N={n} D={d}").unwrap();
    for i in 0..n {
        let o = &preds.offsets[i];
        write!(out, "{} {} {} {}", preds.semantic[i].code(), o.x, o.y, o.z).unwrap();
        for v in preds.embeddings.row(i) {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionSet> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    let mut lines = significant_lines(&content);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, None, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "predictions" || tokens[1] != "v1" {
        return Err(Error::format(
            path,
            Some(hline),
            format!("expected `predictions v1 N=<n> D=<d>`, got {header:?}"),
        ));
    }
    let n = parse_count(path, hline, tokens[2], "N")?;
    let d = parse_count(path, hline, tokens[3], "D")?;
    if d == 0 {
        return Err(Error::format(path, Some(hline), "D must be positive"));
    }

    let mut semantic = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for (line_no, line) in lines {
        if semantic.len() == n {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("more than the declared N={n} records"),
            ));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 + d {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("expected {} fields, got {}", 4 + d, fields.len()),
            ));
        }
        let code = parse_i64(path, line_no, fields[0], "semantic")?;
        semantic.push(
            u8::try_from(code)
                .ok()
                .and_then(Semantic::from_code)
                .ok_or_else(|| {
                    Error::format(
                        path,
                        Some(line_no),
                        format!("semantic class must be 0, 1 or 2, got {code}"),
                    )
                })?,
        );
        offsets.push(Vector3::new(
            parse_f64(path, line_no, fields[1], "dx")?,
            parse_f64(path, line_no, fields[2], "dy")?,
            parse_f64(path, line_no, fields[3], "dz")?,
        ));
        for (j, token) in fields[4..].iter().enumerate() {
            data.push(parse_f64(path, line_no, token, &format!("f_{}", j + 1))?);
        }
    }
    if semantic.len() != n {
        return Err(Error::format(
            path,
            None,
            format!("declared N={n} records but found {}", semantic.len()),
        ));
    }
    Ok(PredictionSet {
        semantic,
        offsets,
        embeddings: Embeddings::new(d, data)?,
    })
}

/// Save per-point predicted instance ids (−1 for dropped points) for a
/// cloud of `n_points` points.
pub fn save_segmentation(
    path: impl AsRef<Path>,
    seg: &Segmentation,
    n_points: usize,
) -> Result<()> {
    let path = path.as_ref();
    if seg.len() > n_points
        || seg
            .clusters
            .iter()
            .flatten()
            .chain(seg.unassigned.iter())
            .any(|&i| i >= n_points)
    {
        return Err(Error::InvalidSpec(format!(
            "segmentation indexes beyond the {n_points}-point cloud"
        )));
    }
    let mut out = String::new();
    writeln!(
        out,
        "segmentation v1 N={} M={}",
        n_points,
        seg.clusters.len()
    )
    .unwrap();
    for id in seg.labels(n_points) {
        writeln!(out, "{id}").unwrap();
    }
    write_atomic(path, &out)
}

/// Load a segmentation; cluster ids must cover `0..M` with no gaps.
pub fn load_segmentation(path: impl AsRef<Path>) -> Result<Segmentation> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    let mut lines = significant_lines(&content);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, None, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "segmentation" || tokens[1] != "v1" {
        return Err(Error::format(
            path,
            Some(hline),
            format!("expected `segmentation v1 N=<n> M=<m>`, got {header:?}"),
        ));
    }
    let n = parse_count(path, hline, tokens[2], "N")?;
    let m = parse_count(path, hline, tokens[3], "M")?;

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut unassigned = Vec::new();
    let mut count = 0usize;
    for (line_no, line) in lines {
        if count == n {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("more than the declared N={n} ids"),
            ));
        }
        let id = parse_i64(path, line_no, line, "instance id")?;
        match id {
            -1 => unassigned.push(count),
            _ if id >= 0 && (id as usize) < m => clusters[id as usize].push(count),
            _ => {
                return Err(Error::format(
                    path,
                    Some(line_no),
                    format!("instance id {id} outside -1..{m}"),
                ))
            }
        }
        count += 1;
    }
    if count != n {
        return Err(Error::format(
            path,
            None,
            format!("declared N={n} ids but found {count}"),
        ));
    }
    if let Some(empty) = clusters.iter().position(Vec::is_empty) {
        return Err(Error::format(
            path,
            None,
            format!("declared M={m} clusters but cluster {empty} has no points"),
        ));
    }
    Ok(Segmentation {
        clusters,
        unassigned,
    })
}

pub fn save_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in entries {
        let rel = e.path.to_string_lossy();
        if e.building_id.contains(char::is_whitespace) || e.building_id.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "manifest building id {:?} must be a single token",
                e.building_id
            )));
        }
        if rel.contains(char::is_whitespace) || rel.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "manifest path {rel:?} must be a single token"
            )));
        }
        writeln!(out, "{} {} {}", e.building_id, rel, e.split.token()).unwrap();
    }
    write_atomic(path, &out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    let mut entries = Vec::new();
    for (line_no, line) in significant_lines(&content) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("expected `<id> <path> <train|test>`, got {line:?}"),
            ));
        }
        let split = match fields[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(Error::format(
                    path,
                    Some(line_no),
                    format!("split must be train or test, got {other:?}"),
                ))
            }
        };
        entries.push(ManifestEntry {
            building_id: fields[0].to_string(),
            path: PathBuf::from(fields[1]),
            split,
        });
    }
    Ok(entries)
}
