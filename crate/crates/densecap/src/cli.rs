//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 partial failure (some videos failed), 2 input
//! error (bad arguments, unreadable or malformed files).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use densecap_core::baselines::{caption_then_match, uniform_segments, BaselineConfig, DEFAULT_WIDTH_FRACTION};
use densecap_core::eval::{Predictions, Segment};
use densecap_core::optimizer::{DenseCaptionResult, DenseCaptioner, StepRecord};
use densecap_core::sampling::SamplingSpec;
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{read_cache_meta, read_feature_cache, write_feature_cache, FeatureCache, ScorerCheck};
use crate::config::{config_hash, dump_config, FileConfig, ResolvedConfig};
use crate::data_io::{
    load_captions, load_ground_truth, load_predictions, to_json_bytes, write_atomic, write_ground_truth,
    write_predictions,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_table};
use crate::features::{extract_features, fixture_frames, fixture_ground_truth, load_frames, write_frames, FRAMES_SUFFIX};
use crate::registry::{paired_language_model, Registry};
use crate::snapshot::{load_state, save_state};
use crate::timeline::Timeline;

pub const CACHE_EXTENSION: &str = "ztaf";

#[derive(Debug, Parser)]
#[command(name = "densecap", version, about = "Test-time dense video captioning")]
pub struct Cli {
    /// Model registry file (TOML); mock ids resolve without one.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed decoded frames (`*.frames.json`) into feature caches.
    Features(FeaturesArgs),
    /// Optimize moments and captions for each cached video.
    Caption(CaptionArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Baseline predictions.
    Baseline(BaselineArgs),
    /// Render predicted and ground-truth intervals of one video.
    Timeline(TimelineArgs),
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Frame files or directories containing them.
    pub inputs: Vec<PathBuf>,
    /// Scorer id used to embed the frames.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Write the planted synthetic video for this seed (frames, cache and
    /// ground truth) instead of reading inputs.
    #[arg(long)]
    pub fixture: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    /// Feature caches.
    #[arg(required = true)]
    pub caches: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Predictions JSON; run metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Refuse caches embedded by a different scorer than the run's.
    #[arg(long)]
    pub strict: bool,
    /// Directory for per-video run-state snapshots; existing snapshots are
    /// resumed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Report JSON; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(subcommand)]
    pub kind: BaselineKind,
}

#[derive(Debug, Subcommand)]
pub enum BaselineKind {
    /// N equal contiguous segments per video.
    Uniform {
        #[arg(required = true)]
        caches: Vec<PathBuf>,
        #[arg(long, default_value_t = 4)]
        num: usize,
        /// Optional `{id: [sentence, ...]}` file; segment k gets sentence k
        /// and N becomes the caption count.
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Place externally produced captions at their best-scoring frame.
    Match {
        #[arg(required = true)]
        caches: Vec<PathBuf>,
        #[arg(long)]
        captions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WIDTH_FRACTION)]
        width: f64,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TimelineArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub video: String,
    /// `.svg` writes SVG, anything else plain text. Text also goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a command did. Failures are per-video problems that did not stop
/// the other videos.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(e) if e.is_input_error() => 2,
        Err(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let registry = match &cli.registry {
        Some(p) => Registry::load(p)?,
        None => Registry::builtin(),
    };
    match cli.command {
        Command::Features(a) => cmd_features(&a, &registry),
        Command::Caption(a) => cmd_caption(&a, &registry),
        Command::Eval(a) => cmd_eval(&a),
        Command::Baseline(a) => cmd_baseline(&a, &registry),
        Command::Timeline(a) => cmd_timeline(&a),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn require_files(paths: &[PathBuf]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Frame files named on the command line, with directories expanded to
/// their `*.frames.json` entries in name order.
fn frame_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(FRAMES_SUFFIX))
                .collect();
            found.sort();
            out.extend(found);
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(Error::io(input, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(out)
}

fn cache_path_for(out_dir: &Path, frames: &Path) -> PathBuf {
    let name = frames.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(FRAMES_SUFFIX).unwrap_or(&name);
    out_dir.join(format!("{stem}.{CACHE_EXTENSION}"))
}

/// A cache is current when it is newer than its frames and was made by the
/// requested scorer.
fn up_to_date(cache: &Path, frames: &Path, scorer: &str) -> bool {
    let modified = |p: &Path| std::fs::metadata(p).and_then(|m| m.modified()).ok();
    match (modified(cache), modified(frames), read_cache_meta(cache)) {
        (Some(c), Some(f), Ok(meta)) => c >= f && meta.scorer_id == scorer,
        _ => false,
    }
}

pub fn cmd_features(args: &FeaturesArgs, registry: &Registry) -> Result<Outcome> {
    create_dir(&args.out)?;
    if let Some(seed) = args.fixture {
        let frames = fixture_frames(seed);
        let frames_path = args.out.join(format!("{}{FRAMES_SUFFIX}", frames.video_id));
        write_frames(&frames_path, &frames)?;
        write_ground_truth(&args.out.join(format!("{}.gt.json", frames.video_id)), &fixture_ground_truth(seed))?;
        let scorer = registry.scorer(&format!("mock-scorer:{seed}"))?;
        let cache = extract_features(&frames_path, &frames, scorer.as_ref(), &SamplingSpec::default())?;
        write_feature_cache(&cache_path_for(&args.out, &frames_path), &cache)?;
        return Ok(Outcome::default());
    }
    let inputs = frame_inputs(&args.inputs)?;
    if inputs.is_empty() {
        return Ok(Outcome::default());
    }
    let scorer_id = args
        .scorer
        .as_deref()
        .ok_or_else(|| Error::Config("--scorer is required unless --fixture is given".into()))?;
    registry.scorer(scorer_id)?;
    let results: Vec<Result<()>> = pool(args.jobs)?.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let target = cache_path_for(&args.out, path);
                if up_to_date(&target, path, scorer_id) {
                    return Ok(());
                }
                let scorer = registry.scorer(scorer_id)?;
                let frames = load_frames(path)?;
                let cache = extract_features(path, &frames, scorer.as_ref(), &SamplingSpec::default())?;
                write_feature_cache(&target, &cache)
            })
            .collect()
    });
    let failures: Vec<String> = results.into_iter().filter_map(|r| r.err().map(|e| e.to_string())).collect();
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Ok(Outcome { failures })
}

#[derive(Debug, Serialize)]
struct FailureContext {
    error: String,
    iteration: Option<usize>,
    step: Option<usize>,
}

#[derive(Debug, Serialize)]
struct VideoMeta {
    cache: PathBuf,
    scorer: String,
    language_model: String,
    warnings: Vec<String>,
    initial_pt_iou: Option<f64>,
    final_losses: Option<densecap_core::optimizer::LossBreakdown>,
    hard_prompts: Vec<String>,
    losses: Vec<StepRecord>,
    failure: Option<FailureContext>,
}

#[derive(Debug, Serialize)]
struct RunMeta {
    config_hash: String,
    seed: u64,
    config: String,
    videos: BTreeMap<String, VideoMeta>,
}

struct VideoRun {
    video_id: String,
    segments: Option<Vec<Segment>>,
    meta: VideoMeta,
}

fn failure_context(e: &Error) -> FailureContext {
    let (iteration, step) = match e {
        Error::Core(densecap_core::Error::Run { iteration, step, .. }) => (Some(*iteration), Some(*step)),
        _ => (None, None),
    };
    FailureContext {
        error: e.to_string(),
        iteration,
        step,
    }
}

fn segments_of(result: &DenseCaptionResult) -> Vec<Segment> {
    result
        .entries
        .iter()
        .map(|e| Segment {
            timestamp: e.timestamp,
            sentence: e.sentence.clone(),
        })
        .collect()
}

fn caption_one(
    path: &Path,
    cache: FeatureCache,
    warnings: Vec<String>,
    config: &ResolvedConfig,
    registry: &Registry,
    checkpoint: Option<&Path>,
) -> VideoRun {
    let scorer_id = config.scorer.clone().unwrap_or_else(|| cache.meta.scorer_id.clone());
    let lm_id = config
        .language_model
        .clone()
        .or_else(|| paired_language_model(&scorer_id))
        .unwrap_or_default();
    let mut meta = VideoMeta {
        cache: path.into(),
        scorer: scorer_id.clone(),
        language_model: lm_id.clone(),
        warnings,
        initial_pt_iou: None,
        final_losses: None,
        hard_prompts: Vec::new(),
        losses: Vec::new(),
        failure: None,
    };
    let video_id = cache.meta.video_id.clone();
    let mut history = Vec::new();
    let outcome = (|| -> Result<DenseCaptionResult> {
        if lm_id.is_empty() {
            return Err(Error::Config(format!(
                "no language model configured and none pairs with scorer {scorer_id}"
            )));
        }
        let scorer = registry.scorer(&scorer_id)?;
        let lm = registry.language_model(&lm_id)?;
        let features = cache.features.to_matrix();
        let mut captioner =
            DenseCaptioner::new(&features, cache.meta.duration, config.run.clone(), lm.as_ref(), scorer.as_ref())?;
        let state_path = checkpoint.map(|d| d.join(format!("{video_id}.state.json")));
        if let Some(p) = state_path.as_deref().filter(|p| p.is_file()) {
            captioner.restore(load_state(p)?)?;
        }
        while !captioner.is_done() {
            let step = captioner.run_iteration();
            history = captioner.history().to_vec();
            step?;
            if let Some(p) = &state_path {
                save_state(p, &captioner.snapshot())?;
            }
        }
        history = captioner.history().to_vec();
        Ok(captioner.result())
    })();
    meta.losses = history;
    let segments = match outcome {
        Ok(result) => {
            meta.initial_pt_iou = Some(result.initial_pt_iou);
            meta.final_losses = Some(result.final_losses);
            meta.hard_prompts = result.entries.iter().map(|e| e.hard_prompt.clone()).collect();
            Some(segments_of(&result))
        }
        Err(e) => {
            meta.failure = Some(failure_context(&e));
            None
        }
    };
    VideoRun {
        video_id,
        segments,
        meta,
    }
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn cmd_caption(args: &CaptionArgs, registry: &Registry) -> Result<Outcome> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let config = file.resolve(args.seed)?;
    require_files(&args.caches)?;
    if let Some(dir) = &args.checkpoint {
        create_dir(dir)?;
    }
    // Caches are read up front so malformed inputs fail before any work.
    let mut loaded = Vec::with_capacity(args.caches.len());
    let mut seen = BTreeMap::new();
    for path in &args.caches {
        let check = match (&config.scorer, args.strict) {
            (Some(id), true) => ScorerCheck::Strict(id),
            (Some(id), false) => ScorerCheck::Warn(id),
            (None, _) => ScorerCheck::Skip,
        };
        let (cache, warnings) = read_feature_cache(path, check)?;
        if let Some(other) = seen.insert(cache.meta.video_id.clone(), path.clone()) {
            return Err(Error::field(
                path,
                "video_id",
                format!("{} is also provided by {}", cache.meta.video_id, other.display()),
            ));
        }
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        loaded.push((path.clone(), cache, warnings));
    }
    let runs: Vec<VideoRun> = pool(args.jobs)?.install(|| {
        loaded
            .into_par_iter()
            .map(|(path, cache, warnings)| {
                caption_one(&path, cache, warnings, &config, registry, args.checkpoint.as_deref())
            })
            .collect()
    });

    let mut predictions = Predictions::new();
    let mut videos = BTreeMap::new();
    let mut failures = Vec::new();
    for run in runs {
        if let Some(segs) = run.segments {
            predictions.insert(run.video_id.clone(), segs);
        }
        if let Some(f) = &run.meta.failure {
            failures.push(format!("{}: {}", run.video_id, f.error));
        }
        videos.insert(run.video_id, run.meta);
    }
    let (scorer, lm) = (config.scorer.as_deref(), config.language_model.as_deref());
    let meta = RunMeta {
        config_hash: config_hash(&config.run, scorer, lm),
        seed: config.run.seed,
        config: dump_config(&config.run, scorer, lm),
        videos,
    };
    write_predictions(&args.out, &predictions)?;
    write_atomic(&meta_path(&args.out), &to_json_bytes(&meta))?;
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Ok(Outcome { failures })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    let gt = load_ground_truth(&args.ground_truth)?;
    let preds = load_predictions(&args.predictions)?;
    let report = evaluate(&gt, &preds)?;
    print!("{}", render_table(&report));
    if let Some(out) = &args.out {
        write_atomic(out, &to_json_bytes(&report))?;
    }
    Ok(Outcome::default())
}

fn run_per_cache<F>(caches: &[PathBuf], out: &Path, mut f: F) -> Result<Outcome>
where
    F: FnMut(&Path, FeatureCache) -> Result<Vec<Segment>>,
{
    require_files(caches)?;
    let mut predictions = Predictions::new();
    let mut failures = Vec::new();
    for path in caches {
        let (cache, _) = read_feature_cache(path, ScorerCheck::Skip)?;
        let id = cache.meta.video_id.clone();
        match f(path, cache) {
            Ok(segs) => {
                predictions.insert(id, segs);
            }
            Err(e) if e.is_input_error() => return Err(e),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    write_predictions(out, &predictions)?;
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Ok(Outcome { failures })
}

fn captions_for<'a>(captions: &'a BTreeMap<String, Vec<String>>, file: &Path, id: &str) -> Result<&'a Vec<String>> {
    captions
        .get(id)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Error::field(file, id, "no captions for this video"))
}

pub fn cmd_baseline(args: &BaselineArgs, registry: &Registry) -> Result<Outcome> {
    match &args.kind {
        BaselineKind::Uniform {
            caches,
            num,
            captions,
            out,
        } => {
            let captions = captions.as_ref().map(|p| load_captions(p).map(|c| (p.clone(), c))).transpose()?;
            run_per_cache(caches, out, |_, cache| {
                let sentences = match &captions {
                    Some((file, c)) => captions_for(c, file, &cache.meta.video_id)?.clone(),
                    None => vec![String::new(); *num],
                };
                let intervals = uniform_segments(cache.meta.duration, sentences.len())?;
                Ok(intervals
                    .into_iter()
                    .zip(sentences)
                    .map(|(timestamp, sentence)| Segment { timestamp, sentence })
                    .collect())
            })
        }
        BaselineKind::Match {
            caches,
            captions,
            width,
            strict,
            out,
        } => {
            let config = BaselineConfig {
                width_fraction: *width,
                ..BaselineConfig::new("caption-then-match")
            };
            config.validate()?;
            let file = captions.clone();
            let captions = load_captions(captions)?;
            let mut first_scorer: Option<String> = None;
            run_per_cache(caches, out, |path, cache| {
                let first = first_scorer.get_or_insert_with(|| cache.meta.scorer_id.clone());
                if *first != cache.meta.scorer_id {
                    let e = Error::ScorerMismatch {
                        path: path.into(),
                        expected: first.clone(),
                        found: cache.meta.scorer_id.clone(),
                    };
                    if *strict {
                        return Err(e);
                    }
                    eprintln!("warning: {e}");
                }
                let sentences = captions_for(&captions, &file, &cache.meta.video_id)?;
                let scorer = registry.scorer(&cache.meta.scorer_id)?;
                let sampling = SamplingSpec {
                    rate: cache.meta.sampling_rate,
                };
                let times = sampling.timestamps(cache.meta.duration)?;
                Ok(caption_then_match(
                    sentences,
                    &cache.features.to_matrix(),
                    &times,
                    cache.meta.duration,
                    scorer.as_ref(),
                    config.width_fraction,
                )?)
            })
        }
    }
}

pub fn cmd_timeline(args: &TimelineArgs) -> Result<Outcome> {
    let gt = load_ground_truth(&args.ground_truth)?;
    let preds = load_predictions(&args.predictions)?;
    let video = gt
        .get(&args.video)
        .ok_or_else(|| Error::field(&args.ground_truth, &args.video, "video not in ground truth"))?;
    let predicted = preds.get(&args.video).map(Vec::as_slice).unwrap_or(&[]);
    let timeline = Timeline::new(&args.video, video.duration, &video.segments, predicted);
    let text = timeline.render_text(72);
    print!("{text}");
    if let Some(out) = &args.out {
        let body = if out.extension().is_some_and(|e| e == "svg") {
            timeline.render_svg()
        } else {
            text
        };
        write_atomic(out, body.as_bytes())?;
    }
    Ok(Outcome::default())
}
