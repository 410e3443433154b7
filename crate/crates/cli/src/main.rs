use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use docsynth::augment::{augment_dataset, AugmentError, AugmentParams, RegionalNoise};
use docsynth::background::{extract_background_batch, BackgroundError, BackgroundParams, Fallback};
use docsynth::binarize::{BinarizeParams, Method};
use docsynth::compose::{check_satisfiable, ComposeError, Generator};
use docsynth::dataset::{generate_dataset, Backgrounds, BwMode, DatasetConfig, DatasetError};
use docsynth::manifest::{read_manifest, write_manifest, ManifestError};
use docsynth::metrics::{evaluate_files, MetricsError};
use docsynth::model::{load_model, validate_assets, ModelError};
use docsynth::raster::RasterError;
use docsynth::textgen::AssetError;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;

/// Synthetic structured handwritten-document generator.
#[derive(Parser, Debug)]
#[command(name = "docsynth", version, about)]
struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true, env = "DOCSYNTH_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,

    /// Log verbosity on standard error.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Erase ink from real scans, leaving reusable paper backgrounds.
    ExtractBg(ExtractBgArgs),
    /// Render a synthetic dataset from a page model.
    Generate(GenerateArgs),
    /// Apply noise, rotation and scaling to an existing dataset.
    Augment(AugmentArgs),
    /// Score record-count predictions against a manifest.
    Evaluate(EvaluateArgs),
    /// Check a page model and the assets it references.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BinarizerArg {
    Otsu,
    Sauvola,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FallbackArg {
    Expand,
    GlobalMean,
}

#[derive(Args, Debug)]
struct ExtractBgArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "otsu")]
    binarizer: BinarizerArg,
    /// Side of the square neighbourhood averaged over ink pixels.
    #[arg(long, default_value_t = 20)]
    window: u32,
    #[arg(long, default_value_t = 0.2)]
    sauvola_k: f64,
    #[arg(long, default_value_t = 31)]
    sauvola_window: u32,
    #[arg(long, default_value_t = 128.0)]
    sauvola_r: f64,
    /// What to do when a window holds no background pixels.
    #[arg(long, value_enum, default_value = "expand")]
    fallback: FallbackArg,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory of background PNGs, or `white`.
    #[arg(long, default_value = "white")]
    backgrounds: String,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Manifest path; defaults to `<out>/manifest.jsonl`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output width; the model's page width when omitted.
    #[arg(long, requires = "height", value_parser = clap::value_parser!(u32).range(1..))]
    width: Option<u32>,
    /// Output height; the model's page height when omitted.
    #[arg(long, requires = "width", value_parser = clap::value_parser!(u32).range(1..))]
    height: Option<u32>,
    /// Threshold pages to black/white: `otsu` or `fixed:<0-255>`.
    #[arg(long)]
    bw: Option<BwMode>,
    /// Also write each transparent foreground layer as `<page>.fg.png`.
    #[arg(long)]
    save_foreground: bool,
}

fn parse_size_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected <min>..<max>, got {s:?}"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad minimum in {s:?}"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad maximum in {s:?}"))?;
    Ok((lo, hi))
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    /// Manifest of the input dataset.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Output manifest; defaults to `<out>/manifest.jsonl`.
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    /// Probability that a pixel becomes salt or pepper.
    #[arg(long, default_value_t = 0.0)]
    salt_pepper: f64,
    /// Restrict noise to this many random regions.
    #[arg(long, requires = "region_size")]
    regions: Option<u32>,
    /// Region side range in pixels, `<min>..<max>`.
    #[arg(long, value_parser = parse_size_range, requires = "regions")]
    region_size: Option<(u32, u32)>,
    /// Rotation range A: angles drawn from [-A, A] degrees.
    #[arg(long, default_value_t = 0.0)]
    rotate: f64,
    /// Scale range s: factors drawn from [1-s, 1+s].
    #[arg(long, default_value_t = 0.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gray level for uncovered pixels; the page's border median by default.
    #[arg(long)]
    fill: Option<u8>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// CSV with columns `page_id,prediction`.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth manifest.
    #[arg(long)]
    truth: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

/// Sorts library errors into the validation and I/O exit classes.
trait ExitClass {
    fn exit_code(&self) -> u8;
}

impl ExitClass for RasterError {
    fn exit_code(&self) -> u8 {
        match self {
            RasterError::NotFound(_) | RasterError::Io { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        }
    }
}

impl ExitClass for ModelError {
    fn exit_code(&self) -> u8 {
        match self {
            ModelError::Io { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        }
    }
}

impl ExitClass for AssetError {
    fn exit_code(&self) -> u8 {
        EXIT_VALIDATION
    }
}

impl ExitClass for ComposeError {
    fn exit_code(&self) -> u8 {
        EXIT_VALIDATION
    }
}

impl ExitClass for ManifestError {
    fn exit_code(&self) -> u8 {
        match self {
            ManifestError::Io { .. } => EXIT_IO,
            ManifestError::Parse { .. } => EXIT_VALIDATION,
        }
    }
}

impl ExitClass for DatasetError {
    fn exit_code(&self) -> u8 {
        match self {
            DatasetError::Compose(e) => e.exit_code(),
            DatasetError::Raster(e) => e.exit_code(),
            DatasetError::Io { .. } => EXIT_IO,
            DatasetError::NoBackgrounds(_) | DatasetError::Config(_) => EXIT_VALIDATION,
        }
    }
}

impl ExitClass for BackgroundError {
    fn exit_code(&self) -> u8 {
        match self {
            BackgroundError::Io { .. } => EXIT_IO,
            BackgroundError::Raster(e) => e.exit_code(),
            _ => EXIT_VALIDATION,
        }
    }
}

impl ExitClass for AugmentError {
    fn exit_code(&self) -> u8 {
        match self {
            AugmentError::Io { .. } => EXIT_IO,
            AugmentError::Raster(e) => e.exit_code(),
            AugmentError::Param(_) | AugmentError::MissingImage { .. } => EXIT_VALIDATION,
        }
    }
}

impl ExitClass for MetricsError {
    fn exit_code(&self) -> u8 {
        match self {
            MetricsError::Manifest(e) => e.exit_code(),
            MetricsError::Csv { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        }
    }
}

fn fail<E>(e: E) -> Failure
where
    E: ExitClass + std::error::Error + Send + Sync + 'static,
{
    Failure {
        code: e.exit_code(),
        error: e.into(),
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        error: anyhow!("{}: {e}", path.display()),
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error: anyhow!(msg.into()),
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn extract_bg(args: ExtractBgArgs) -> Result<(), Failure> {
    let binarize = match args.binarizer {
        BinarizerArg::Otsu => BinarizeParams::otsu(),
        BinarizerArg::Sauvola => BinarizeParams {
            method: Method::Sauvola,
            sauvola_window: args.sauvola_window,
            sauvola_k: args.sauvola_k,
            sauvola_r: args.sauvola_r,
        },
    };
    let params = BackgroundParams {
        binarize,
        window: args.window,
        fallback: match args.fallback {
            FallbackArg::Expand => Fallback::ExpandWindow,
            FallbackArg::GlobalMean => Fallback::GlobalMean,
        },
    };
    let report = extract_background_batch(&args.input, &args.output, &params).map_err(fail)?;
    info!(
        "extracted {} backgrounds into {} ({} skipped)",
        report.processed.len(),
        args.output.display(),
        report.skipped.len()
    );
    Ok(())
}

fn generate(args: GenerateArgs, workers: usize) -> Result<(), Failure> {
    if args.count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    let model = load_model(&args.model).map_err(fail)?;
    let generator = Generator::new(model).map_err(fail)?;
    let backgrounds = if args.backgrounds == "white" {
        Backgrounds::white()
    } else {
        Backgrounds::from_dir(Path::new(&args.backgrounds)).map_err(fail)?
    };
    let cfg = DatasetConfig {
        count: args.count,
        base_seed: args.seed,
        target: args.width.zip(args.height),
        bw: args.bw.unwrap_or_default(),
        save_foreground: args.save_foreground,
        workers,
    };
    let started = Instant::now();
    info!(
        "generating {} pages with {} workers from {}",
        cfg.count,
        workers,
        args.model.display()
    );
    let rows = generate_dataset(&generator, &backgrounds, &cfg, &args.out).map_err(fail)?;
    let manifest = args.manifest.unwrap_or_else(|| args.out.join("manifest.jsonl"));
    write_manifest(&manifest, &rows).map_err(fail)?;

    let mut histogram = BTreeMap::new();
    for r in &rows {
        *histogram.entry(r.record_count).or_insert(0u32) += 1;
    }
    let dist: Vec<String> = histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    info!(
        "wrote {} pages and {} in {:.1}s; records per page {}",
        rows.len(),
        manifest.display(),
        started.elapsed().as_secs_f64(),
        dist.join(" ")
    );
    Ok(())
}

fn augment(args: AugmentArgs, workers: usize) -> Result<(), Failure> {
    let params = AugmentParams {
        salt_pepper: args.salt_pepper,
        regions: args.regions.zip(args.region_size).map(|(count, (lo, hi))| RegionalNoise {
            count,
            min_size: lo,
            max_size: hi,
        }),
        rotate: args.rotate,
        scale: args.scale,
        seed: args.seed,
        fill: args.fill,
    };
    params.validate().map_err(fail)?;
    let rows = read_manifest(&args.manifest).map_err(fail)?;
    if rows.is_empty() {
        return Err(invalid(format!("{}: manifest has no pages", args.manifest.display())));
    }
    let out_manifest = args
        .out_manifest
        .unwrap_or_else(|| args.out.join("manifest.jsonl"));
    if out_manifest == args.manifest {
        return Err(invalid("output manifest would overwrite the input manifest"));
    }
    let out = augment_dataset(&rows, &args.input, &args.out, &params, workers).map_err(fail)?;
    write_manifest(&out_manifest, &out).map_err(fail)?;
    info!("augmented {} pages into {}", out.len(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let report = evaluate_files(&args.pred, &args.truth).map_err(fail)?;
    if report.error.is_none() {
        warn!("every ground-truth count is zero; error is undefined");
    }
    if let Some(path) = &args.json {
        fs::write(path, report.to_json()).map_err(|e| io_fail(path, e))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let model = load_model(&args.model).map_err(fail)?;
    check_satisfiable(&model).map_err(fail)?;
    let assets = validate_assets(&model);
    for f in assets.failures() {
        eprintln!("error: {}", f.error.as_deref().unwrap_or_default());
    }
    if !assets.is_ok() {
        return Err(invalid(format!(
            "{}: {} asset(s) failed to load",
            args.model.display(),
            assets.failures().count()
        )));
    }
    println!(
        "OK {}: {}x{} page, {}..{} records, {} record group(s), header {}, {} graphic(s), {} font(s), {} dictionar{}, sha256 {}",
        args.model.display(),
        model.width,
        model.height,
        model.records_min,
        model.effective_records_max(),
        model.record_groups.len(),
        if model.header.is_some() { "yes" } else { "no" },
        model.graphics.len(),
        model.fonts.len(),
        model.dictionaries.len(),
        if model.dictionaries.len() == 1 { "y" } else { "ies" },
        model.digest
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    let workers = cli.workers.map_or_else(default_workers, |n| n as usize);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
    {
        warn!("could not size the global thread pool: {e}");
    }
    let result = match cli.command {
        Command::ExtractBg(a) => extract_bg(a),
        Command::Generate(a) => generate(a, workers),
        Command::Augment(a) => augment(a, workers),
        Command::Evaluate(a) => evaluate(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
