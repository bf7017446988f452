//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Geometry input admits no unique answer (fewer than three points,
    /// collinear or coincident points).
    #[error("degenerate geometry input: {0}")]
    DegenerateInput(String),

    /// Two per-point arrays that must be parallel have different lengths.
    #[error("length mismatch: {context} ({left} vs {right})")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// An operation that needs ground-truth labels got an unlabeled cloud.
    #[error("point cloud has no ground-truth labels")]
    MissingGroundTruth,

    /// An instance id in the contiguous range has no member points.
    #[error("instance {0} has no points")]
    EmptyInstance(i64),

    /// A class label lies outside the logit dimension.
    #[error("label {label} out of range for {classes} classes at point {index}")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        index: usize,
    },

    /// The operation needs at least one labeled instance.
    #[error("no instances present")]
    NoInstances,

    /// More instances than the embedding dimensionality can encode.
    #[error("{instances} instances exceed embedding dimension {dim}")]
    TooManyInstances { instances: usize, dim: usize },

    /// Clustering or refinement produced or received no clusters.
    #[error("no clusters: {0}")]
    NoClusters(String),

    /// Ground truth contains no roof instances to evaluate against.
    #[error("ground truth contains no roof instances")]
    EmptyGroundTruth,

    /// Overlap of two empty sets has no defined value.
    #[error("IoU of two empty sets is undefined")]
    BothEmpty,

    /// An aggregation over zero reports has no defined value.
    #[error("cannot aggregate an empty report list")]
    EmptyList,

    /// A roof specification violates its parameter constraints.
    #[error("invalid roof spec: {0}")]
    InvalidSpec(String),

    /// A configuration key/value is unknown or out of range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A data file violates its format; reported with position when known.
    #[error("format error in {path}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn length_mismatch(context: &'static str, left: usize, right: usize) -> Self {
        Error::LengthMismatch {
            context,
            left,
            right,
        }
    }

    pub fn format(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for command-line reporting: 2 for malformed input
    /// files or configuration, 3 for algorithmic failures on valid input,
    /// 4 for filesystem problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. } | Error::InvalidConfig(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
