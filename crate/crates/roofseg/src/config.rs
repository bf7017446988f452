//! Pipeline configuration: one flat struct covering every tunable, loadable
//! from `key = value` text files and overridable key-by-key (command-line
//! flags reuse the same setter, so "flags override config" falls out for
//! free).
//!
//! Unknown keys and out-of-range values are rejected at load time with
//! [`Error::InvalidConfig`], never silently ignored.

use std::path::{Path, PathBuf};

use crate::cluster::ClusterParams;
use crate::error::{Error, Result};
use crate::features::NoiseSpec;
use crate::refine::RefineWeights;

/// Where per-point predictions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderChoice {
    /// Ground-truth-derived predictions with configured noise.
    Oracle,
    /// Geometry-only features (normals, plane offsets, heights).
    Handcrafted,
    /// Pre-computed prediction file (e.g. from an external model).
    File(PathBuf),
}

impl ProviderChoice {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "oracle" => Ok(ProviderChoice::Oracle),
            "handcrafted" => Ok(ProviderChoice::Handcrafted),
            _ => match text.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(ProviderChoice::File(PathBuf::from(path))),
                _ => Err(Error::InvalidConfig(format!(
                    "provider must be oracle, handcrafted or file:<path>, got {text:?}"
                ))),
            },
        }
    }

    pub fn text(&self) -> String {
        match self {
            ProviderChoice::Oracle => "oracle".into(),
            ProviderChoice::Handcrafted => "handcrafted".into(),
            ProviderChoice::File(path) => format!("file:{}", path.display()),
        }
    }
}

/// Every pipeline tunable with its default.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cluster: ClusterParams,
    /// Neighborhood size for ground-truth boundary derivation.
    pub k_boundary: usize,
    pub provider: ProviderChoice,
    /// Master seed; per-building seeds derive from it.
    pub seed: u64,
    /// Oracle noise levels (the noise seed itself comes from `seed`).
    pub offset_sigma: f64,
    pub embedding_sigma: f64,
    pub semantic_flip_rate: f64,
    /// Embedding width for generated (oracle/handcrafted) predictions.
    pub embed_dim: usize,
    pub refine: RefineWeights,
    /// Worker threads for multi-building commands; 0 = all cores.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cluster: ClusterParams::default(),
            k_boundary: 16,
            provider: ProviderChoice::Oracle,
            seed: 0,
            offset_sigma: 0.0,
            embedding_sigma: 0.0,
            semantic_flip_rate: 0.0,
            embed_dim: 16,
            refine: RefineWeights::default(),
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    /// Set one parameter from its textual form. Both the config-file loader
    /// and command-line flag overrides funnel through here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidConfig(format!("bad value {value:?} for key {key:?}"))
            })
        }
        match key {
            "r" => self.cluster.radius = num(key, value)?,
            "w1" => self.cluster.w1 = num(key, value)?,
            "w2" => self.cluster.w2 = num(key, value)?,
            "tn" => self.cluster.min_cluster_size = num(key, value)?,
            "k_boundary" => self.k_boundary = num(key, value)?,
            "provider" => self.provider = ProviderChoice::parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "offset_sigma" => self.offset_sigma = num(key, value)?,
            "embedding_sigma" => self.embedding_sigma = num(key, value)?,
            "semantic_flip_rate" => self.semantic_flip_rate = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "refine_geom_weight" => self.refine.geometry = num(key, value)?,
            "refine_embed_weight" => self.refine.embedding = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            _ => {
                return Err(Error::InvalidConfig(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }

    /// Validate all values against module invariants.
    pub fn validate(&self) -> Result<()> {
        let reword = |e: Error| match e {
            Error::InvalidSpec(msg) => Error::InvalidConfig(msg),
            other => other,
        };
        self.cluster.validate().map_err(reword)?;
        self.refine.validate().map_err(reword)?;
        self.noise_spec(0).validate().map_err(reword)?;
        if self.k_boundary < 2 {
            return Err(Error::InvalidConfig(
                "k_boundary must be at least 2".into(),
            ));
        }
        if self.embed_dim < 1 {
            return Err(Error::InvalidConfig("embed_dim must be positive".into()));
        }
        if self.provider == ProviderChoice::Handcrafted && self.embed_dim < 5 {
            return Err(Error::InvalidConfig(
                "the handcrafted provider needs embed_dim of at least 5".into(),
            ));
        }
        Ok(())
    }

    /// The oracle noise parameters with a concrete seed filled in.
    pub fn noise_spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            offset_sigma: self.offset_sigma,
            embedding_sigma: self.embedding_sigma,
            semantic_flip_rate: self.semantic_flip_rate,
            seed,
        }
    }

    /// Parse a `key = value` file on top of the defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::default();
        for (line_no, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "{}:{}: expected key = value, got {line:?}",
                    path.display(),
                    line_no + 1
                )));
            };
            config.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidConfig(msg) => {
                    Error::InvalidConfig(format!("{}:{}: {msg}", path.display(), line_no + 1))
                }
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Serialize as a loadable `key = value` file.
    pub fn to_text(&self) -> String {
        format!(
            "r = {}\nw1 = {}\nw2 = {}\ntn = {}\nk_boundary = {}\nprovider = {}\nseed = {}\n\
             offset_sigma = {}\nembedding_sigma = {}\nsemantic_flip_rate = {}\nembed_dim = {}\n\
             refine_geom_weight = {}\nrefine_embed_weight = {}\njobs = {}\n",
            self.cluster.radius,
            self.cluster.w1,
            self.cluster.w2,
            self.cluster.min_cluster_size,
            self.k_boundary,
            self.provider.text(),
            self.seed,
            self.offset_sigma,
            self.embedding_sigma,
            self.semantic_flip_rate,
            self.embed_dim,
            self.refine.geometry,
            self.refine.embedding,
            self.jobs,
        )
    }
}
