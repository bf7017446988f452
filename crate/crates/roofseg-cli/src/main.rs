//! `roofseg` — roof plane segmentation toolkit.
//!
//! Four subcommands cover the whole workflow: `synth` writes a labeled
//! synthetic dataset, `segment` runs the boundary-aware pipeline on one
//! cloud, `eval` scores predicted segmentations against ground truth, and
//! `compare` races the pipeline against the RANSAC and region-growing
//! baselines over a dataset.
//!
//! Every command is deterministic given its arguments and seed, and all
//! file writes are atomic, so interrupted runs never leave truncated
//! datasets behind.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use roofseg::cluster::Segmentation;
use roofseg::config::PipelineConfig;
use roofseg::error::{Error, Result};
use roofseg::io::{
    load_cloud, load_manifest, load_segmentation, save_cloud, save_manifest, save_segmentation,
    save_text, ManifestEntry, Split,
};
use roofseg::metrics::{aggregate, evaluate, MetricsReport};
use roofseg::pipeline::{derive_seed, segment_cloud, PipelineVariant};
use roofseg::synthgen::{add_nonroof_clutter, generate_building, RoofFamily, RoofSpec};
use roofseg::{baselines, PointCloud};

#[derive(Parser)]
#[command(
    name = "roofseg",
    version,
    about = "Boundary-aware roof plane segmentation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset with a train/test manifest.
    Synth(SynthArgs),
    /// Segment one point cloud into roof plane instances.
    Segment(SegmentArgs),
    /// Score predicted segmentations against labeled clouds.
    Eval(EvalArgs),
    /// Run ours + baselines over a dataset and tabulate the metrics.
    Compare(CompareArgs),
}

/// Pipeline parameters shared by `segment` and `compare`. Values come from
/// built-in defaults, then `--config`, then explicit flags, in that order.
#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Joint-space clustering radius.
    #[arg(long)]
    r: Option<f64>,
    /// Euclidean distance weight.
    #[arg(long)]
    w1: Option<f64>,
    /// Embedding distance weight.
    #[arg(long)]
    w2: Option<f64>,
    /// Minimum cluster size (clusters must be strictly larger).
    #[arg(long)]
    tn: Option<usize>,
    /// Neighborhood size for boundary derivation.
    #[arg(long = "k-boundary")]
    k_boundary: Option<usize>,
    /// Prediction source: oracle | handcrafted | file:<path>.
    #[arg(long)]
    provider: Option<String>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Oracle offset noise (fraction of cloud radius).
    #[arg(long)]
    offset_sigma: Option<f64>,
    /// Oracle embedding noise (fraction of the inter-code distance).
    #[arg(long)]
    embedding_sigma: Option<f64>,
    /// Oracle semantic flip probability.
    #[arg(long)]
    semantic_flip_rate: Option<f64>,
    /// Embedding width for generated predictions.
    #[arg(long)]
    embed_dim: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        // Funnel flags through the same setter as file lines so both paths
        // validate identically.
        let overrides: [(&str, Option<String>); 12] = [
            ("r", self.r.map(|v| v.to_string())),
            ("w1", self.w1.map(|v| v.to_string())),
            ("w2", self.w2.map(|v| v.to_string())),
            ("tn", self.tn.map(|v| v.to_string())),
            ("k_boundary", self.k_boundary.map(|v| v.to_string())),
            ("provider", self.provider.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
            ("offset_sigma", self.offset_sigma.map(|v| v.to_string())),
            ("embedding_sigma", self.embedding_sigma.map(|v| v.to_string())),
            (
                "semantic_flip_rate",
                self.semantic_flip_rate.map(|v| v.to_string()),
            ),
            ("embed_dim", self.embed_dim.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config.set(key, &value)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory (created if missing).
    out_dir: PathBuf,
    /// Number of buildings.
    #[arg(long, default_value_t = 22)]
    n: usize,
    /// Weighted family mix, e.g. "gable:2,hip:1"; "all" = every family
    /// equally. Families: gable saltbox hip pyramid mansard crossgable.
    #[arg(long, default_value = "all")]
    families: String,
    /// Points sampled per roof.
    #[arg(long, default_value_t = 2048)]
    points: usize,
    /// Gaussian geometric noise sigma, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Extra non-roof clutter points as a fraction of the roof points.
    #[arg(long, default_value_t = 0.15)]
    clutter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SegmentArgs {
    /// Input cloud file.
    cloud: PathBuf,
    /// Output segmentation file.
    #[arg(long)]
    out: PathBuf,
    /// Also write an `x y z r g b` file for visual inspection.
    #[arg(long)]
    colored: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted segmentation files, paired with --gt by position.
    #[arg(long = "pred", required = true, num_args = 1..)]
    preds: Vec<PathBuf>,
    /// Labeled ground-truth cloud files.
    #[arg(long = "gt", required = true, num_args = 1..)]
    gts: Vec<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also write the report to a file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Dataset directory containing manifest.txt.
    dataset: PathBuf,
    /// Comma-separated subset of: ours, ransac, region_growing.
    #[arg(long, default_value = "ours,ransac,region_growing")]
    methods: String,
    /// Which manifest split to use: all | train | test.
    #[arg(long, default_value = "all")]
    split: String,
    /// Also write the table to a file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Segment(args) => cmd_segment(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Compare(args) => cmd_compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse_family_mix(text: &str) -> Result<Vec<(RoofFamily, f64)>> {
    if text == "all" {
        return Ok(RoofFamily::ALL.iter().map(|&f| (f, 1.0)).collect());
    }
    let mut mix = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let (name, weight) = match part.split_once(':') {
            Some((name, weight)) => {
                let weight: f64 = weight.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("bad family weight in {part:?}"))
                })?;
                (name.trim(), weight)
            }
            None => (part, 1.0),
        };
        let family = RoofFamily::from_name(name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown roof family {name:?} (expected one of: gable saltbox hip pyramid mansard crossgable)"
            ))
        })?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "family weight must be positive, got {weight}"
            )));
        }
        mix.push((family, weight));
    }
    if mix.is_empty() {
        return Err(Error::InvalidConfig("empty family mix".into()));
    }
    Ok(mix)
}

fn pick_family(mix: &[(RoofFamily, f64)], rng: &mut ChaCha8Rng) -> RoofFamily {
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let mut t = rng.random_range(0.0..total);
    for &(family, weight) in mix {
        if t < weight {
            return family;
        }
        t -= weight;
    }
    mix[mix.len() - 1].0
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mix = parse_family_mix(&args.families)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let mut entries = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, i as u64));
        let family = pick_family(&mix, &mut rng);
        let spec = RoofSpec::sampled(family, rng.random());
        let roof = generate_building(&spec, args.points, args.noise)?;
        let cloud = add_nonroof_clutter(&roof, args.clutter, rng.random())?;

        let building_id = format!("b{i:04}");
        let file = format!("{building_id}.cloud");
        save_cloud(args.out_dir.join(&file), &cloud)?;
        entries.push(ManifestEntry {
            building_id,
            path: PathBuf::from(file),
            // 10:1 train/test split by building index.
            split: if i % 11 == 0 { Split::Test } else { Split::Train },
        });
    }
    save_manifest(args.out_dir.join("manifest.txt"), &entries)?;

    let test = entries.iter().filter(|e| e.split == Split::Test).count();
    println!(
        "wrote {} buildings to {} ({} train, {} test)",
        args.n,
        args.out_dir.display(),
        args.n - test,
        test
    );
    Ok(())
}

fn cmd_segment(args: &SegmentArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let cloud = load_cloud(&args.cloud)?;
    let seg = segment_cloud(&cloud, &config, config.seed, PipelineVariant::full())?;
    save_segmentation(&args.out, &seg, cloud.len())?;
    if let Some(colored) = &args.colored {
        save_text(colored, &colored_cloud_text(&cloud, &seg))?;
    }
    println!(
        "{} points -> {} clusters, {} unassigned; wrote {}",
        cloud.len(),
        seg.clusters.len(),
        seg.unassigned.len(),
        args.out.display()
    );
    Ok(())
}

fn metric_row(id: &str, report: &MetricsReport) -> String {
    format!(
        "{id}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
        report.cov,
        report.wcov,
        report.mprec,
        report.mrec,
        report.n_gt_instances,
        report.n_pred_instances
    )
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    if args.preds.len() != args.gts.len() {
        return Err(Error::InvalidConfig(format!(
            "{} prediction files paired with {} ground-truth files",
            args.preds.len(),
            args.gts.len()
        )));
    }
    let pairs: Vec<(&PathBuf, &PathBuf)> = args.preds.iter().zip(&args.gts).collect();
    let results: Vec<Result<(String, MetricsReport)>> = with_pool(args.jobs, || {
        pairs
            .par_iter()
            .map(|(pred, gt)| {
                let cloud = load_cloud(gt)?;
                let seg = load_segmentation(pred)?;
                let covered = seg.clusters.iter().map(Vec::len).sum::<usize>()
                    + seg.unassigned.len();
                if covered != cloud.len() {
                    return Err(Error::length_mismatch(
                        "segmentation vs cloud",
                        covered,
                        cloud.len(),
                    ));
                }
                let gt_ref = cloud.require_gt()?;
                let report = evaluate(&seg, gt_ref)?;
                Ok((building_id(pred), report))
            })
            .collect()
    })?;
    let mut rows: Vec<(String, MetricsReport)> = results.into_iter().collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let mut out = String::from("building\tcov\twcov\tmprec\tmrec\tgt\tpred\n");
    for (id, report) in &rows {
        out.push_str(&metric_row(id, report));
        out.push('\n');
    }
    let reports: Vec<MetricsReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let agg = aggregate(&reports)?;
    out.push_str(&metric_row("aggregate", &agg));
    out.push('\n');
    out.push_str(&format!(
        "\nbuildings={}\ncov={}\nwcov={}\nmprec={}\nmrec={}\n",
        rows.len(),
        agg.cov,
        agg.wcov,
        agg.mprec,
        agg.mrec
    ));

    print!("{out}");
    if let Some(path) = &args.out {
        save_text(path, &out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Ours,
    Ransac,
    RegionGrowing,
}

impl Method {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "ours" => Ok(Method::Ours),
            "ransac" => Ok(Method::Ransac),
            "region_growing" => Ok(Method::RegionGrowing),
            _ => Err(Error::InvalidConfig(format!(
                "unknown method {name:?} (expected ours, ransac or region_growing)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Ransac => "ransac",
            Method::RegionGrowing => "region_growing",
        }
    }

    fn run(self, cloud: &PointCloud, config: &PipelineConfig, seed: u64) -> Result<Segmentation> {
        match self {
            Method::Ours => segment_cloud(cloud, config, seed, PipelineVariant::full()),
            Method::Ransac => {
                let params = baselines::RansacParams { seed, ..Default::default() };
                baselines::ransac_segment(&cloud.normalize(), &params)
            }
            Method::RegionGrowing => {
                baselines::region_grow_segment(&cloud.normalize(), &Default::default())
            }
        }
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|m| Method::parse(m.trim()))
        .collect::<Result<_>>()?;
    let split = match args.split.as_str() {
        "all" => None,
        "train" => Some(Split::Train),
        "test" => Some(Split::Test),
        other => {
            return Err(Error::InvalidConfig(format!(
                "split must be all, train or test, got {other:?}"
            )));
        }
    };

    let mut entries = load_manifest(args.dataset.join("manifest.txt"))?;
    entries.retain(|e| split.map_or(true, |s| e.split == s));
    entries.sort_by(|a, b| a.building_id.cmp(&b.building_id));
    if entries.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no buildings in split {:?}",
            args.split
        )));
    }

    let per_building: Vec<Result<Vec<MetricsReport>>> = with_pool(config.jobs, || {
        entries
            .par_iter()
            .enumerate()
            .map(|(index, entry)| {
                let cloud = load_cloud(args.dataset.join(&entry.path))?;
                let gt = cloud.require_gt()?.clone();
                let seed = derive_seed(config.seed, index as u64);
                methods
                    .iter()
                    .map(|m| evaluate(&m.run(&cloud, &config, seed)?, &gt))
                    .collect()
            })
            .collect()
    })?;
    let per_building: Vec<Vec<MetricsReport>> = per_building.into_iter().collect::<Result<_>>()?;

    let mut out = format!(
        "# {} buildings, split={}, seed={}\nmethod\tcov\twcov\tmprec\tmrec\n",
        entries.len(),
        args.split,
        config.seed
    );
    for (col, method) in methods.iter().enumerate() {
        let column: Vec<MetricsReport> =
            per_building.iter().map(|row| row[col].clone()).collect();
        let agg = aggregate(&column)?;
        out.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
            method.name(),
            agg.cov,
            agg.wcov,
            agg.mprec,
            agg.mrec
        ));
    }

    print!("{out}");
    if let Some(path) = &args.out {
        save_text(path, &out)?;
    }
    Ok(())
}

/// Run `f` on a worker pool of `jobs` threads (0 = the default global pool).
fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn building_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// `x y z r g b` text with one palette color per cluster, gray for
/// unassigned points, in the cloud's original coordinates.
fn colored_cloud_text(cloud: &PointCloud, seg: &Segmentation) -> String {
    let labels = seg.labels(cloud.len());
    let mut out =
        String::from("# x y z r g b — one color per predicted instance, gray = unassigned\n");
    for (p, &label) in cloud.points.iter().zip(&labels) {
        let (r, g, b) = if label < 0 {
            (128, 128, 128)
        } else {
            palette_color(label as usize)
        };
        out.push_str(&format!("{} {} {} {r} {g} {b}\n", p.x, p.y, p.z));
    }
    out
}

fn palette_color(index: usize) -> (u8, u8, u8) {
    // Golden-angle hue steps keep consecutive instances far apart on the
    // color wheel no matter how many there are.
    let hue = (index as f64 * 137.507_764_050_037_85) % 360.0;
    hsv_to_rgb(hue, 0.65, 0.95)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_byte = |t: f64| ((t + m) * 255.0).round() as u8;
    (to_byte(r), to_byte(g), to_byte(b))
}
