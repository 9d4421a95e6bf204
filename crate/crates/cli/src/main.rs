use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpsr_core::config::{resolve_workers, RunConfig, WORKERS_ENV};
use mpsr_core::featuremap::{argmax, half_max_width, unit_grid};
use mpsr_core::inference::{evaluate_accuracy, BinarySampler, GreySampler};
use mpsr_core::io::export::{export_curve, export_metrics, export_pbm, export_pgm, MetricRecord};
use mpsr_core::io::idx::load_idx;
use mpsr_core::io::model_file::{load_model, save_model};
use mpsr_core::io::preprocess::{preprocess, to_raster, PreprocessConfig};
use mpsr_core::pipeline::pretrain;
use mpsr_core::reduction::{mean_sq_overlap, OverlapOptions};
use mpsr_core::{Dataset, Error, FeatureMap, ModelSet, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "mpsr", version, about = "Compressed MPS class wavefunctions for image data")]
struct Cli {
    /// Worker threads; the MPSR_WORKERS environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce the training images of every label into one MPS each.
    Pretrain(PretrainArgs),
    /// Evaluate a model file on a labelled test set.
    Classify(ClassifyArgs),
    /// Draw images from one class model.
    Sample(SampleArgs),
    /// Schmidt spectra or overlap diagnostics of a model file.
    Inspect(InspectArgs),
    /// Tabulate the smoothed delta function of a feature map.
    Smooth(SmoothArgs),
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    train_images: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    #[arg(long, default_value = "cos-sin")]
    map: String,
    #[arg(long, default_value_t = 32)]
    chi: usize,
    #[arg(long, default_value = "tree")]
    strategy: String,
    /// Images per exactly summed leaf; defaults to chi.
    #[arg(long)]
    leaf_batch: Option<usize>,
    #[arg(long, default_value_t = 2)]
    sweeps: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 2)]
    downscale: usize,
    #[arg(long)]
    binarize: Option<f64>,
    #[arg(long, default_value = "raster")]
    order: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only the first N training images of each label.
    #[arg(long)]
    per_label: Option<usize>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Metrics CSV, written when a test set is given.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value = "model.mpsm")]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test_images: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Overrides the threshold recorded in the model file.
    #[arg(long)]
    binarize: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Binary,
    Grey,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    label: u8,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, value_enum, default_value = "binary")]
    mode: Mode,
    #[arg(long, default_value = "phased")]
    grey_map: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    outdir: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Bond index whose Schmidt spectrum is printed.
    #[arg(long, conflicts_with = "overlap")]
    schmidt: Option<usize>,
    /// Mean squared overlap of each model with the exact sum of its images.
    #[arg(long, requires_all = ["train_images", "train_labels"])]
    overlap: bool,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    /// First M images of each label.
    #[arg(long)]
    subset: Option<usize>,
    /// Evaluate every pair even when the count exceeds the cap.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long, default_value = "sin-40")]
    map: String,
    #[arg(long, default_value_t = 0.5)]
    xi: f64,
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    #[arg(long, default_value = "curve.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = resolve_workers(cli.workers, std::env::var(WORKERS_ENV).ok().as_deref())?;
    // classification and inspection use the global pool
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a, workers),
        Command::Classify(a) => cmd_classify(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Smooth(a) => cmd_smooth(a),
    }
}

fn cmd_pretrain(a: PretrainArgs, workers: usize) -> Result<()> {
    let mut cfg = RunConfig::new(&a.train_images, &a.train_labels);
    cfg.map = a.map.parse()?;
    cfg.chi = a.chi;
    cfg.strategy = a.strategy.parse()?;
    cfg.leaf_batch = a.leaf_batch;
    cfg.sweeps = a.sweeps;
    cfg.tol = a.tol;
    cfg.downscale = a.downscale;
    cfg.binarize = a.binarize;
    cfg.pixel_order = a.order.parse()?;
    cfg.seed = a.seed;
    cfg.worker_limit = workers;
    cfg.test_images = a.test_images.clone();
    cfg.test_labels = a.test_labels.clone();
    if let Some(dir) = a.out.parent() {
        cfg.output_dir = dir.to_path_buf();
    }
    cfg.validate()?;

    let raw = load_idx(&cfg.train_images, &cfg.train_labels)?;
    let mut train = preprocess(&raw, &cfg.preprocess())?;
    if let Some(n) = a.per_label {
        train = train.take_per_label(n);
    }
    println!(
        "training on {} images of {}x{} ({} sites), map {}, chi {}, {} on {} worker(s)",
        train.len(),
        train.height,
        train.width,
        train.pixels(),
        cfg.map,
        cfg.chi,
        cfg.strategy,
        workers
    );
    let start = Instant::now();
    let set = pretrain(&train, cfg.map, &cfg.plan())?;
    let train_time = start.elapsed().as_secs_f64();
    let set = set
        .with_metadata("downscale", cfg.downscale.to_string())
        .with_metadata("binarize", cfg.binarize.map_or("none".to_string(), |t| t.to_string()))
        .with_metadata("seed", cfg.seed.to_string())
        .with_metadata(
            "desk_defaults",
            "image size and pixel order are run choices, not taken from a reference setup",
        );
    save_model(&set, &a.out)?;
    println!(
        "wrote {} ({} models) in {train_time:.2}s",
        a.out.display(),
        set.models().len()
    );

    if let (Some(images), Some(labels)) = (&cfg.test_images, &cfg.test_labels) {
        let test = preprocess(&load_idx(images, labels)?, &cfg.preprocess())?;
        let start = Instant::now();
        let eval = evaluate_accuracy(&set, &test.images, &test.labels)?;
        println!("test accuracy {:.4} on {} images", eval.accuracy, test.len());
        if let Some(path) = &a.metrics {
            let record = MetricRecord {
                chi: cfg.chi,
                strategy: cfg.strategy.to_string(),
                map_id: cfg.map.to_string(),
                accuracy: Some(eval.accuracy),
                mean_sq_overlap: None,
                wall_time_s: train_time + start.elapsed().as_secs_f64(),
            };
            export_metrics(&[record], path)?;
        }
    }
    Ok(())
}

/// Preprocessing that maps raw IDX images onto the model's chain.
fn model_preprocess(set: &ModelSet, raw: &Dataset, binarize: Option<f64>) -> Result<PreprocessConfig> {
    if set.height == 0
        || raw.height % set.height != 0
        || raw.width % set.width != 0
        || raw.height / set.height != raw.width / set.width
    {
        return Err(Error::Consistency(format!(
            "{}x{} images cannot be pooled to the model's {}x{}",
            raw.height, raw.width, set.height, set.width
        )));
    }
    let recorded = match set.metadata_value("binarize") {
        None | Some("none") => None,
        Some(v) => Some(
            v.parse::<f64>()
                .map_err(|_| Error::Consistency(format!("recorded binarize threshold {v:?}")))?,
        ),
    };
    Ok(PreprocessConfig {
        downscale: raw.height / set.height,
        binarize: binarize.or(recorded),
        order: set.pixel_order(),
    })
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let set = load_model(&a.model)?;
    let raw = load_idx(&a.test_images, &a.test_labels)?;
    let test = preprocess(&raw, &model_preprocess(&set, &raw, a.binarize)?)?;
    let start = Instant::now();
    let eval = evaluate_accuracy(&set, &test.images, &test.labels)?;
    let elapsed = start.elapsed().as_secs_f64();
    println!("accuracy {:.4} on {} images ({elapsed:.2}s)", eval.accuracy, test.len());
    println!("confusion (rows true, columns predicted):");
    for (label, row) in eval.confusion.iter().enumerate() {
        if row.iter().any(|&c| c > 0) {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:5}")).collect();
            println!("{label:3} {}", cells.join(""));
        }
    }
    if let Some(path) = &a.metrics {
        let record = MetricRecord {
            chi: set.chi(),
            strategy: set.metadata_value("strategy").unwrap_or("unknown").to_string(),
            map_id: set.map().to_string(),
            accuracy: Some(eval.accuracy),
            mean_sq_overlap: None,
            wall_time_s: elapsed,
        };
        export_metrics(&[record], path)?;
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let set = load_model(&a.model)?;
    let model = set
        .get(a.label)
        .ok_or_else(|| Error::Config(format!("model file has no class {}", a.label)))?;
    std::fs::create_dir_all(&a.outdir).map_err(|e| io_error(&a.outdir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (h, w, order) = (set.height, set.width, set.pixel_order());
    match a.mode {
        Mode::Binary => {
            let sampler = BinarySampler::new(model);
            for k in 0..a.count {
                let s = sampler.sample(&mut rng)?;
                let path = a.outdir.join(format!("sample_{}_{k:04}.pbm", a.label));
                export_pbm(&to_raster(s.values(), w, order), h, w, &path)?;
            }
        }
        Mode::Grey => {
            let map: FeatureMap = a.grey_map.parse()?;
            let sampler = GreySampler::new(model, map)?;
            for k in 0..a.count {
                let (_, x) = sampler.sample(&mut rng)?;
                let path = a.outdir.join(format!("sample_{}_{k:04}.pgm", a.label));
                export_pgm(&to_raster(&x, w, order), h, w, &path)?;
            }
        }
    }
    println!(
        "wrote {} samples of class {} to {}",
        a.count,
        a.label,
        a.outdir.display()
    );
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let set = load_model(&a.model)?;
    println!(
        "map {}, chi {}, {}x{} {} ({} sites), {} models",
        set.map(),
        set.chi(),
        set.height,
        set.width,
        set.pixel_order(),
        set.sites(),
        set.models().len()
    );
    for (k, v) in &set.metadata {
        println!("  {k}: {v}");
    }
    if let Some(cut) = a.schmidt {
        for m in set.models() {
            let spectrum = m.state().schmidt_spectrum(cut)?;
            let head: Vec<String> = spectrum.iter().take(8).map(|p| format!("{p:.3e}")).collect();
            println!(
                "label {} cut {cut}: rank {}, weights {}",
                m.label,
                spectrum.len(),
                head.join(" ")
            );
        }
    }
    if a.overlap {
        let (images, labels) = (a.train_images.as_ref().unwrap(), a.train_labels.as_ref().unwrap());
        let raw = load_idx(images, labels)?;
        let mut train = preprocess(&raw, &model_preprocess(&set, &raw, None)?)?;
        if let Some(m) = a.subset {
            train = train.take_per_label(m);
        }
        let opts = OverlapOptions {
            estimate: !a.exact,
            ..OverlapOptions::default()
        };
        for (label, images) in train.by_label() {
            let Some(model) = set.get(label) else { continue };
            let q = mean_sq_overlap(model.state(), set.map(), &images, &opts)?;
            println!("label {label}: {} images, squared overlap {q:.10}", images.len());
        }
    }
    Ok(())
}

fn cmd_smooth(a: SmoothArgs) -> Result<()> {
    let map: FeatureMap = a.map.parse()?;
    if a.grid < 2 {
        return Err(Error::Config("grid needs at least 2 points".into()));
    }
    let xs = unit_grid(a.grid);
    let values = map.smooth_delta(a.xi, &xs)?;
    export_curve(&xs, &values, &a.out)?;
    let abs: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let peak = argmax(&abs).map_or(f64::NAN, |i| xs[i]);
    println!(
        "{} at xi {}: peak at {peak:.4}, half-max width {:.4}, wrote {}",
        map,
        a.xi,
        half_max_width(&xs, &values),
        a.out.display()
    );
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}
