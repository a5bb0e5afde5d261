//! `veinroi` command-line interface.
//!
//! Exit codes: 0 success, 1 pipeline failure (or hard protocol violations
//! for `validate`), 2 usage error, unreadable input or invalid configuration.

pub mod config;
pub mod record;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use veinroi::dataset::{scan_dataset, summary_stats, validate_protocol, Convention, Manifest};
use veinroi::enhance::{enhance, EnhanceMode, EnhanceParams};
use veinroi::image::{load_image, save_image, write_atomic};
use veinroi::overlay::render_overlay;
use veinroi::roi::{detect_pegs, extract_with, select_peg_pair, ExtractOptions};
use veinroi::synth::PegPolarity;
use veinroi::synth::{
    make_corpus, make_database_mimic, CorpusOptions, IlluminationChoice, MimicOptions, Variations,
};
use veinroi::{Error, Illumination, Stage};

use config::ProfileConfig;
use record::{BatchResults, BatchSummary, ExtractRecord};

#[derive(Debug, Parser)]
#[command(
    name = "veinroi",
    version,
    about = "Peg-referenced ROI extraction for NIR hand-vein images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the 500x500 ROI from one image.
    Extract(ExtractArgs),
    /// Extract ROIs from every image of a corpus manifest or directory.
    Batch(BatchArgs),
    /// Render synthetic scenes with ground truth.
    Synth(SynthArgs),
    /// Scan a dataset tree into a manifest.
    Manifest(DatasetArgs),
    /// Check a dataset against the capture protocol.
    Validate(DatasetArgs),
    /// Summary statistics of a dataset.
    Stats(DatasetArgs),
    /// Contrast-enhance an image (typically an extracted ROI).
    Enhance(EnhanceArgs),
    /// Circle detection only, for debugging.
    Detect(DetectArgs),
    /// Print the built-in profile config as TOML (a starting point for --config).
    Config,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Profile name from the config (default: the config's default_profile).
    #[arg(long)]
    pub profile: Option<String>,
    /// Profile config TOML; built-in transmitted/reflected profiles when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub input: PathBuf,
    /// Where to write the ROI (portable graymap).
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Also write a diagnostic image with the circles and ROI square.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Write the raw ROI without contrast enhancement.
    #[arg(long)]
    pub no_enhance: bool,
    /// Parallel Hough voting inside the image (same result).
    #[arg(long)]
    pub parallel_hough: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// A corpus or dataset manifest (JSON) or a directory; a directory
    /// holding manifest.json is read through it, otherwise every .pgm/.png
    /// below it (outside `truth/`) is processed.
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Worker threads (default: available cores).
    #[arg(long, short)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub no_enhance: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IlluminationArg {
    Both,
    Transmitted,
    Reflected,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of scenes.
    #[arg(long, default_value_t = 1)]
    pub corpus: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = IlluminationArg::Both)]
    pub illumination: IlluminationArg,
    /// Raster width (default 1000; 696 with --database-mimic).
    #[arg(long)]
    pub width: Option<u32>,
    /// Raster height (default 667; 464 with --database-mimic).
    #[arg(long)]
    pub height: Option<u32>,
    /// Unperturbed reference layout: no pose, exposure or noise variation.
    #[arg(long)]
    pub reference: bool,
    /// Render pegs bright instead of dark.
    #[arg(long)]
    pub bright_pegs: bool,
    /// Skip the vein/hand truth masks.
    #[arg(long)]
    pub no_masks: bool,
    /// Write a 107-subject, 1213-image dataset tree instead of a flat corpus.
    #[arg(long, conflicts_with_all = ["corpus", "illumination", "reference", "bright_pegs", "no_masks"])]
    pub database_mimic: bool,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset root directory, or a manifest JSON written by `manifest`.
    pub target: PathBuf,
    /// Naming convention TOML (default: the database-mimic layout).
    #[arg(long)]
    pub convention: Option<PathBuf>,
    /// Write the JSON here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Global,
    Local,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Local)]
    pub mode: ModeArg,
    /// Tile grid as COLSxROWS.
    #[arg(long, default_value = "8x8", value_parser = parse_grid)]
    pub tiles: (u32, u32),
    #[arg(long, default_value_t = 2.0)]
    pub clip: f64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or("expected COLSxROWS, e.g. 8x8")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }

    fn pipeline(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

/// Errors about the inputs or configuration exit 2; everything else 1.
fn classify(e: Error) -> Failure {
    match e.root() {
        Error::NotFound(_)
        | Error::UnsupportedFormat(_)
        | Error::CorruptData(_)
        | Error::Config(_)
        | Error::Convention(_)
        | Error::InvalidSpec(_) => Failure::usage(e),
        _ => Failure::pipeline(e),
    }
}

/// Parses `args` and runs the command, printing results to standard output
/// and diagnostics to standard error. Returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Extract(a) => cmd_extract(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Manifest(a) => cmd_manifest(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Config => {
            print!("{}", ProfileConfig::default().to_toml_string());
            Ok(0)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ProfileConfig, Failure> {
    match path {
        Some(p) => ProfileConfig::load(p).map_err(classify),
        None => Ok(ProfileConfig::default()),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("record serializes")
    );
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(value).expect("record serializes");
    b.push(b'\n');
    b
}

fn cmd_extract(a: ExtractArgs) -> Result<i32, Failure> {
    let cfg = load_config(a.profile.config.as_deref())?;
    let (name, profile) = cfg
        .resolve(a.profile.profile.as_deref(), None)
        .map_err(classify)?;
    let img = load_image(&a.input).map_err(|e| classify(e.at(Stage::Load)))?;
    let opts = ExtractOptions {
        parallel_hough: a.parallel_hough,
    };
    let res = extract_with(&img, profile, &opts).map_err(Failure::pipeline)?;
    let roi = if a.no_enhance {
        res.roi.clone()
    } else {
        enhance(&res.roi, &profile.enhance).map_err(|e| Failure::pipeline(e.at(Stage::Enhance)))?
    };
    save_image(&roi, &a.out).map_err(|e| Failure::pipeline(e.at(Stage::Save)))?;
    if let Some(path) = &a.overlay {
        let ov = render_overlay(
            &img,
            &res.hits,
            &[res.pegs.left, res.pegs.right],
            Some(&res.spec),
        );
        save_image(&ov, path).map_err(|e| Failure::pipeline(e.at(Stage::Save)))?;
    }
    let rec = ExtractRecord::success(
        a.input.display().to_string(),
        name.to_string(),
        &res,
        Some(a.out.display().to_string()),
        a.overlay.as_ref().map(|p| p.display().to_string()),
        !a.no_enhance,
    );
    print_json(&rec);
    Ok(0)
}

/// One image to process: path relative to `root`, optional illumination tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct BatchItem {
    rel: String,
    tag: Option<Illumination>,
}

#[derive(Deserialize)]
struct TaggedRecord {
    path: String,
    illumination: Option<Illumination>,
}

/// Corpus manifests list `records` relative to their own directory; dataset
/// manifests list `captures` relative to the scanned `root`.
#[derive(Deserialize)]
struct TaggedManifest {
    #[serde(alias = "captures")]
    records: Vec<TaggedRecord>,
    root: Option<PathBuf>,
}

fn batch_items(input: &Path) -> Result<(PathBuf, Vec<BatchItem>), Failure> {
    let manifest_path = if input.is_dir() {
        input.join("manifest.json")
    } else {
        input.to_path_buf()
    };
    if manifest_path.is_file() {
        let bytes = fs::read(&manifest_path)
            .map_err(|e| Failure::usage(format!("{}: {e}", manifest_path.display())))?;
        let m: TaggedManifest = serde_json::from_slice(&bytes).map_err(|e| {
            Failure::usage(format!(
                "{}: not a corpus manifest: {e}",
                manifest_path.display()
            ))
        })?;
        let root = match m.root {
            Some(root) => root,
            None => manifest_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
        };
        let items = m
            .records
            .into_iter()
            .map(|r| BatchItem {
                rel: r.path,
                tag: r.illumination,
            })
            .collect();
        return Ok((root, items));
    }
    if !input.is_dir() {
        return Err(Failure::usage(Error::NotFound(input.to_path_buf())));
    }
    let mut items = Vec::new();
    let mut stack = vec![input.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries =
            fs::read_dir(&dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let entry = entry.map_err(Failure::usage)?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            if path.is_dir() {
                if name != "truth" {
                    stack.push(path);
                }
                continue;
            }
            let ext = path
                .extension()
                .map(|e| e.to_string_lossy().to_ascii_lowercase());
            if matches!(ext.as_deref(), Some("pgm" | "pnm" | "png")) {
                let rel = path.strip_prefix(input).expect("below root");
                let rel = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                items.push(BatchItem { rel, tag: None });
            }
        }
    }
    Ok((input.to_path_buf(), items))
}

fn cmd_batch(a: BatchArgs) -> Result<i32, Failure> {
    let cfg = load_config(a.profile.config.as_deref())?;
    if let Some(name) = &a.profile.profile {
        cfg.resolve(Some(name), None).map_err(classify)?;
    }
    let (root, mut items) = batch_items(&a.input)?;
    items.sort();
    items.dedup();
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(Failure::pipeline)?;
    fs::create_dir_all(a.out_dir.join("rois")).map_err(|e| Failure::pipeline(Error::from(e)))?;

    let process = |item: &BatchItem| -> ExtractRecord {
        let (name, profile) = cfg
            .resolve(a.profile.profile.as_deref(), item.tag)
            .expect("checked above");
        let out_rel = format!(
            "rois/{}",
            Path::new(&item.rel).with_extension("pgm").to_string_lossy()
        );
        let result = (|| {
            let img = load_image(root.join(&item.rel)).map_err(|e| e.at(Stage::Load))?;
            let res = extract_with(&img, profile, &ExtractOptions::default())?;
            let roi = if a.no_enhance {
                res.roi.clone()
            } else {
                enhance(&res.roi, &profile.enhance).map_err(|e| e.at(Stage::Enhance))?
            };
            let out = a.out_dir.join(&out_rel);
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::from(e).at(Stage::Save))?;
            }
            save_image(&roi, &out).map_err(|e| e.at(Stage::Save))?;
            Ok::<_, Error>(res)
        })();
        match result {
            Ok(res) => ExtractRecord::success(
                item.rel.clone(),
                name.to_string(),
                &res,
                Some(out_rel),
                None,
                !a.no_enhance,
            ),
            Err(e) => ExtractRecord::failure(item.rel.clone(), name.to_string(), &e),
        }
    };
    let records: Vec<ExtractRecord> = pool.install(|| items.par_iter().map(process).collect());
    let summary = BatchSummary::of(&records);
    eprintln!("{}", summary.note);
    let failed = summary.failed;
    let results = BatchResults { summary, records };
    write_atomic(a.out_dir.join("results.json"), &json_bytes(&results))
        .map_err(Failure::pipeline)?;
    Ok(if failed > 0 { 1 } else { 0 })
}

fn cmd_synth(a: SynthArgs) -> Result<i32, Failure> {
    if a.database_mimic {
        let d = MimicOptions::default();
        let opts = MimicOptions {
            seed: a.seed,
            width: a.width.unwrap_or(d.width),
            height: a.height.unwrap_or(d.height),
            ..d
        };
        let m = make_database_mimic(&a.out, &opts).map_err(classify)?;
        eprintln!(
            "wrote {} images for {} subjects to {}",
            m.records.len(),
            veinroi::synth::MIMIC_SUBJECTS,
            a.out.display()
        );
        return Ok(0);
    }
    let illumination = match a.illumination {
        IlluminationArg::Both => IlluminationChoice::Both,
        IlluminationArg::Transmitted => IlluminationChoice::Transmitted,
        IlluminationArg::Reflected => IlluminationChoice::Reflected,
    };
    let d = CorpusOptions::default();
    let opts = CorpusOptions {
        n: a.corpus,
        seed: a.seed,
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        illumination,
        variations: if a.reference {
            Variations::none()
        } else {
            Variations::default()
        },
        peg_polarity: if a.bright_pegs {
            PegPolarity::Bright
        } else {
            PegPolarity::Dark
        },
        write_masks: !a.no_masks,
    };
    if opts.n == 0 {
        return Err(Failure::usage("--corpus must be at least 1"));
    }
    let m = make_corpus(&a.out, &opts).map_err(classify)?;
    eprintln!("wrote {} scenes to {}", m.records.len(), a.out.display());
    Ok(0)
}

fn load_convention(p: Option<&Path>) -> Result<Convention, Failure> {
    match p {
        Some(p) => Convention::load(p).map_err(classify),
        None => Ok(Convention::default()),
    }
}

/// A dataset directory is scanned; a file is read as a manifest JSON.
fn dataset_manifest(a: &DatasetArgs) -> Result<Manifest, Failure> {
    let conv = load_convention(a.convention.as_deref())?;
    if a.target.is_file() {
        let bytes = fs::read(&a.target)
            .map_err(|e| Failure::usage(format!("{}: {e}", a.target.display())))?;
        return serde_json::from_slice(&bytes).map_err(|e| {
            Failure::usage(format!(
                "{}: not a dataset manifest: {e}",
                a.target.display()
            ))
        });
    }
    scan_dataset(&a.target, &conv).map_err(classify)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, &json_bytes(value)).map_err(Failure::pipeline),
        None => {
            print_json(value);
            Ok(())
        }
    }
}

fn cmd_manifest(a: DatasetArgs) -> Result<i32, Failure> {
    let m = dataset_manifest(&a)?;
    eprintln!(
        "{} subjects, {} captures, {} skipped",
        m.subjects.len(),
        m.captures.len(),
        m.skipped.len()
    );
    emit(&m, a.out.as_deref())?;
    Ok(0)
}

fn cmd_validate(a: DatasetArgs) -> Result<i32, Failure> {
    let m = dataset_manifest(&a)?;
    let report = validate_protocol(&m);
    eprintln!(
        "{} violation(s), {} warning(s)",
        report.violations.len(),
        report.warnings.len()
    );
    emit(&report, a.out.as_deref())?;
    Ok(if report.is_conforming() { 0 } else { 1 })
}

fn cmd_stats(a: DatasetArgs) -> Result<i32, Failure> {
    let m = dataset_manifest(&a)?;
    emit(&summary_stats(&m), a.out.as_deref())?;
    Ok(0)
}

fn cmd_enhance(a: EnhanceArgs) -> Result<i32, Failure> {
    let img = load_image(&a.input).map_err(|e| classify(e.at(Stage::Load)))?;
    let mode = match a.mode {
        ModeArg::Global => EnhanceMode::GlobalEq,
        ModeArg::Local => EnhanceMode::LocalAdaptive,
    };
    let params = EnhanceParams {
        tile_grid: a.tiles,
        clip_limit: a.clip,
        mode,
    };
    params.validate().map_err(Failure::usage)?;
    let out = enhance(&img, &params).map_err(|e| Failure::pipeline(e.at(Stage::Enhance)))?;
    save_image(&out, &a.out).map_err(|e| Failure::pipeline(e.at(Stage::Save)))?;
    Ok(0)
}

#[derive(Serialize)]
struct DetectRecord {
    input: String,
    profile: String,
    hits: Vec<veinroi::CircleHit>,
    pegs: Option<veinroi::PegPair>,
}

fn cmd_detect(a: DetectArgs) -> Result<i32, Failure> {
    let cfg = load_config(a.profile.config.as_deref())?;
    let (name, profile) = cfg
        .resolve(a.profile.profile.as_deref(), None)
        .map_err(classify)?;
    let img = load_image(&a.input).map_err(|e| classify(e.at(Stage::Load)))?;
    let hits = detect_pegs(&img, profile, &ExtractOptions::default()).map_err(Failure::pipeline)?;
    let pegs = select_peg_pair(&hits, &profile.resolve(img.width())).ok();
    if let Some(path) = &a.overlay {
        let pair: Vec<_> = pegs.iter().flat_map(|p| [p.left, p.right]).collect();
        save_image(&render_overlay(&img, &hits, &pair, None), path)
            .map_err(|e| Failure::pipeline(e.at(Stage::Save)))?;
    }
    print_json(&DetectRecord {
        input: a.input.display().to_string(),
        profile: name.to_string(),
        hits,
        pegs,
    });
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("8x8").unwrap(), (8, 8));
        assert_eq!(parse_grid("4X2").unwrap(), (4, 2));
        assert!(parse_grid("8").is_err());
        assert!(parse_grid("ax2").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["veinroi"]), 2);
        assert_eq!(run(["veinroi", "extract"]), 2);
        assert_eq!(run(["veinroi", "frobnicate"]), 2);
    }
}
