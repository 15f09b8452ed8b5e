//! Command-line front end over directories of feature maps.
//!
//! Output layout under `--out-dir`: `coarse/<id>.pgm` (grid resolution),
//! `libs/{fg,bg}.plib` plus `libs/build.tsv`, `masks/<id>.pgm` (original
//! resolution), `report.tsv` and `run.log`. Images are processed in parallel
//! but every file and log line is produced in manifest order, so the output
//! tree does not depend on the worker count.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::coarse_mask::{coarse_mask, ClusterMethod, CoarseMaskParams};
use crate::error::{Error, Result};
use crate::evalkit::{EvalReport, ImageScores};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::mvkr::{
    build_index, mvkr_mask, upsample_mask, RetrievalIndex, RetrievalParams, View, DEFAULT_TOP_K,
};
use crate::prototype_miner::{build_libraries, mine_with_mask, Mined, DEFAULT_BINS};
use crate::synth_bench::{generate, FgShape, SynthSpec};
use crate::tensor_store::{read_fmap, read_mask, read_plib, write_mask, write_plib, FeatureMap};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_EMPTY_LIBRARY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "protoseg",
    version,
    about = "Unsupervised pseudo-masks from patch feature maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coarse foreground/background split of every feature map.
    Coarse(PipelineArgs),
    /// Mine prototypes from coarse masks and build the libraries.
    Buildlib(PipelineArgs),
    /// Label every patch by KNN retrieval against the libraries.
    Retrieve(PipelineArgs),
    /// Score predicted masks against ground truth.
    Eval(PipelineArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Coarse, buildlib, retrieve and, given --gt-dir, eval.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub fmap_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Comma-separated subset of identity,hflip,vflip,rot90,rot180,rot270.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "identity,hflip,vflip,rot90,rot180,rot270"
    )]
    pub views: Vec<View>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value = "spectral")]
    pub method: ClusterMethod,
    #[arg(long, default_value_t = 2)]
    pub eig_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub fg_tie_break: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub num_images: usize,
    #[arg(long, default_value_t = 16)]
    pub h: usize,
    #[arg(long, default_value_t = 16)]
    pub w: usize,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 0.9)]
    pub intra_sim: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dataset_sep: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value = "centered_rect")]
    pub fg_shape: FgShape,
    #[arg(long, default_value_t = 0.0)]
    pub artifact_rate: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

impl From<&SynthArgs> for SynthSpec {
    fn from(a: &SynthArgs) -> Self {
        SynthSpec {
            num_images: a.num_images,
            h: a.h,
            w: a.w,
            d: a.d,
            intra_sim: a.intra_sim,
            dataset_sep: a.dataset_sep,
            noise_sigma: a.noise_sigma,
            fg_shape: a.fg_shape,
            artifact_rate: a.artifact_rate,
            seed: a.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub fmap_dir: PathBuf,
    pub out_dir: PathBuf,
    pub gt_dir: Option<PathBuf>,
    pub coarse: CoarseMaskParams,
    pub retrieval: RetrievalParams,
    pub bins: usize,
    pub workers: usize,
}

impl PipelineConfig {
    pub fn new(fmap_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            fmap_dir: fmap_dir.into(),
            out_dir: out_dir.into(),
            gt_dir: None,
            coarse: CoarseMaskParams::default(),
            retrieval: RetrievalParams::default(),
            bins: DEFAULT_BINS,
            workers: 1,
        }
    }

    fn coarse_dir(&self) -> PathBuf {
        self.out_dir.join("coarse")
    }

    fn libs_dir(&self) -> PathBuf {
        self.out_dir.join("libs")
    }

    fn masks_dir(&self) -> PathBuf {
        self.out_dir.join("masks")
    }
}

impl From<&PipelineArgs> for PipelineConfig {
    fn from(a: &PipelineArgs) -> Self {
        PipelineConfig {
            fmap_dir: a.fmap_dir.clone(),
            out_dir: a.out_dir.clone(),
            gt_dir: a.gt_dir.clone(),
            coarse: CoarseMaskParams {
                method: a.method,
                eig_count: a.eig_count,
                kmeans_seed: a.seed,
                ..Default::default()
            },
            retrieval: RetrievalParams {
                top_k: a.top_k,
                views: a.views.clone(),
                fg_tie_break: a.fg_tie_break,
            },
            bins: a.bins,
            workers: a.workers as usize,
        }
    }
}

/// Line-oriented run log, flushed to `run.log` once a command finishes.
#[derive(Debug, Default)]
pub struct RunLog {
    lines: Vec<String>,
}

impl RunLog {
    pub fn push(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    fn flush(&self, out_dir: &Path, truncate: bool) -> Result<()> {
        let path = out_dir.join("run.log");
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!truncate)
            .truncate(truncate)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        for line in &self.lines {
            writeln!(file, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_manifest(cfg: &PipelineConfig) -> Result<DatasetManifest> {
    require_dir(&cfg.fmap_dir)?;
    let manifest = DatasetManifest::from_dirs(&cfg.fmap_dir, cfg.gt_dir.as_deref())?;
    if manifest.is_empty() {
        return Err(Error::io(
            &cfg.fmap_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .fmap files"),
        ));
    }
    Ok(manifest)
}

fn load_map(entry: &ManifestEntry, log: Option<&mut Vec<String>>) -> Result<FeatureMap> {
    let fm = read_fmap(&entry.fmap_path).map_err(|e| e.for_image(&entry.image_id))?;
    if fm.image_id() != entry.image_id {
        if let Some(notes) = log {
            notes.push(format!(
                "warn\t{}\tstored id {:?} differs from file name",
                entry.image_id,
                fm.image_id()
            ));
        }
    }
    Ok(fm)
}

fn all_failed(stage: &str, n: usize) -> Error {
    Error::EmptyInput(format!("{stage}: all {n} images failed"))
}

/// Per-image outcome of a parallel stage, logged in manifest order.
type Outcome<T> = (Vec<String>, Result<T>);

fn run_parallel<T: Send>(
    manifest: &DatasetManifest,
    f: impl Fn(&ManifestEntry, &mut Vec<String>) -> Result<T> + Sync,
) -> Vec<Outcome<T>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let mut notes = Vec::new();
            let r = f(e, &mut notes);
            (notes, r)
        })
        .collect()
}

fn coarse_stage(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    log: &mut RunLog,
) -> Result<Vec<Mined>> {
    let dir = cfg.coarse_dir();
    create_dir(&dir)?;
    let outcomes = run_parallel(manifest, |e, notes| {
        let fm = load_map(e, Some(notes))?;
        let mask = coarse_mask(&fm, &cfg.coarse).map_err(|err| err.for_image(&e.image_id))?;
        write_mask(dir.join(format!("{}.pgm", e.image_id)), &mask)?;
        notes.push(format!(
            "coarse\t{}\tfg {}/{}",
            e.image_id,
            mask.count_ones(),
            fm.num_cells()
        ));
        mine_with_mask(&fm, &mask)
    });
    collect_stage("coarse", manifest, outcomes, log)
}

fn collect_stage<T>(
    stage: &str,
    manifest: &DatasetManifest,
    outcomes: Vec<Outcome<T>>,
    log: &mut RunLog,
) -> Result<Vec<T>> {
    let mut kept = Vec::new();
    for (entry, (notes, result)) in manifest.entries.iter().zip(outcomes) {
        notes.into_iter().for_each(|n| log.push(n));
        match result {
            Ok(v) => kept.push(v),
            Err(err) => log.push(format!("skip\t{}\t{stage}: {}", entry.image_id, err.root())),
        }
    }
    if kept.is_empty() {
        return Err(all_failed(stage, manifest.len()));
    }
    Ok(kept)
}

fn build_stage(cfg: &PipelineConfig, mined: &[Mined], log: &mut RunLog) -> Result<()> {
    for m in mined {
        if let Mined::Degenerate { image_id, reason } = m {
            log.push(format!("degenerate\t{image_id}\t{reason}"));
        }
    }
    let build = build_libraries(mined, cfg.bins)?;
    let dir = cfg.libs_dir();
    create_dir(&dir)?;
    write_plib(dir.join("fg.plib"), &build.fg_lib)?;
    write_plib(dir.join("bg.plib"), &build.bg_lib)?;
    build.report.write(dir.join("build.tsv"))?;
    log.push(format!(
        "buildlib\tthreshold {}\tkept {}/{}",
        build.report.threshold, build.report.kept_images, build.report.total_images
    ));
    Ok(())
}

fn load_index(cfg: &PipelineConfig) -> Result<RetrievalIndex> {
    let dir = cfg.libs_dir();
    let fg = read_plib(dir.join("fg.plib"))?;
    let bg = read_plib(dir.join("bg.plib"))?;
    build_index(&fg, &bg)
}

fn retrieve_stage(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    log: &mut RunLog,
) -> Result<Vec<String>> {
    cfg.retrieval.validate()?;
    let index = load_index(cfg)?;
    let dir = cfg.masks_dir();
    create_dir(&dir)?;
    let outcomes = run_parallel(manifest, |e, _| {
        let fm = load_map(e, None)?;
        let grid =
            mvkr_mask(&fm, &index, &cfg.retrieval).map_err(|err| err.for_image(&e.image_id))?;
        let mask = upsample_mask(&grid, fm.orig_h(), fm.orig_w())?;
        write_mask(dir.join(format!("{}.pgm", e.image_id)), &mask)?;
        Ok(e.image_id.clone())
    });
    let done = collect_stage("retrieve", manifest, outcomes, log)?;
    log.push(format!("retrieve\tmasks {}/{}", done.len(), manifest.len()));
    Ok(done)
}

fn eval_stage(cfg: &PipelineConfig, ids: &[String], log: &mut RunLog) -> Result<EvalReport> {
    let gt_dir = cfg
        .gt_dir
        .as_deref()
        .ok_or_else(|| Error::Config("eval needs --gt-dir".into()))?;
    require_dir(gt_dir)?;
    let pred_dir = cfg.masks_dir();
    require_dir(&pred_dir)?;
    let mut scores = Vec::new();
    for id in ids {
        let file = format!("{id}.pgm");
        let scored = read_mask(pred_dir.join(&file))
            .and_then(|p| Ok((p, read_mask(gt_dir.join(&file))?)))
            .and_then(|(p, g)| ImageScores::compute(id.as_str(), &p, &g));
        match scored {
            Ok(s) => scores.push(s),
            Err(err) => log.push(format!("skip\t{id}\teval: {}", err.root())),
        }
    }
    let report = EvalReport::from_scores(scores)?;
    report.write(&cfg.out_dir.join("report.tsv"))?;
    log.push(format!(
        "eval\tmae {}\tiou {}\tf_measure {}",
        report.mean_mae, report.mean_iou, report.mean_f
    ));
    Ok(report)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Runs a stage body, then writes whatever was logged even on failure.
fn logged<T>(
    cfg: &PipelineConfig,
    truncate: bool,
    body: impl FnOnce(&mut RunLog) -> Result<T> + Send,
) -> Result<T>
where
    T: Send,
{
    create_dir(&cfg.out_dir)?;
    let mut log = RunLog::default();
    let result = with_pool(cfg.workers, || body(&mut log));
    if let Err(err) = &result {
        log.push(format!("error\t{err}"));
    }
    log.flush(&cfg.out_dir, truncate)?;
    result
}

pub fn cmd_coarse(cfg: &PipelineConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    logged(cfg, false, |log| {
        coarse_stage(cfg, &manifest, log).map(drop)
    })
}

pub fn cmd_buildlib(cfg: &PipelineConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let coarse_dir = cfg.coarse_dir();
    require_dir(&coarse_dir)?;
    logged(cfg, false, |log| {
        let outcomes = run_parallel(&manifest, |e, notes| {
            let fm = load_map(e, Some(notes))?;
            let mask = read_mask(coarse_dir.join(format!("{}.pgm", e.image_id)))
                .map_err(|err| err.for_image(&e.image_id))?;
            mine_with_mask(&fm, &mask)
        });
        let mined = collect_stage("buildlib", &manifest, outcomes, log)?;
        build_stage(cfg, &mined, log)
    })
}

pub fn cmd_retrieve(cfg: &PipelineConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    logged(cfg, false, |log| {
        retrieve_stage(cfg, &manifest, log).map(drop)
    })
}

pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let manifest = load_manifest(cfg)?;
    let ids: Vec<String> = manifest.ids().map(str::to_string).collect();
    logged(cfg, false, |log| eval_stage(cfg, &ids, log))
}

pub fn cmd_synth(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    generate(spec)?.write(out_dir)
}

pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<Option<EvalReport>> {
    let manifest = load_manifest(cfg)?;
    if let Some(gt) = &cfg.gt_dir {
        require_dir(gt)?;
    }
    cfg.retrieval.validate()?;
    logged(cfg, true, |log| {
        let mined = coarse_stage(cfg, &manifest, log)?;
        build_stage(cfg, &mined, log)?;
        let done = retrieve_stage(cfg, &manifest, log)?;
        match cfg.gt_dir {
            Some(_) => eval_stage(cfg, &done, log).map(Some),
            None => Ok(None),
        }
    })
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
        Error::EmptyLibrary(_) => EXIT_EMPTY_LIBRARY,
        _ => EXIT_INTERNAL,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Coarse(a) => cmd_coarse(&a.into()),
        Command::Buildlib(a) => cmd_buildlib(&a.into()),
        Command::Retrieve(a) => cmd_retrieve(&a.into()),
        Command::Eval(a) => cmd_eval(&a.into()).map(drop),
        Command::Pipeline(a) => cmd_pipeline(&a.into()).map(drop),
        Command::Synth(a) => cmd_synth(&a.into(), &a.out_dir).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INTERNAL
            } else {
                EXIT_OK
            };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
