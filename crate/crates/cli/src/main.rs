//! `spbtrack`: track, evaluate, ablate and generate from the command line.

mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use spbtrack::io::{
    attach_features, detections_to_frames, read_config, read_ego_poses, read_feature_sidecar,
    read_kitti_detections, read_labels, read_tracks, write_tracks,
};
use spbtrack::metrics::{evaluate, SequenceData};
use spbtrack::pipeline::{ablation_csv, parse_sweep, run_ablation, run_sequence};
use spbtrack::simgen::generate;
use spbtrack::{Config, ScenarioSpec, StageTimings, TrackerConfig};

use manifest::{RunManifest, Timing};

#[derive(Parser)]
#[command(name = "spbtrack", version, about = "LiDAR person tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track detections and write KITTI-format results.
    Track(TrackArgs),
    /// Score results against ground truth (CLEAR-MOT, sAMOTA, AMOTA).
    Eval(EvalArgs),
    /// Sweep configuration values over a synthetic scenario.
    Ablate(AblateArgs),
    /// Write a synthetic scenario: ground truth, detections, features.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; defaults to $SPBTRACK_CONFIG when set.
    #[arg(long, env = "SPBTRACK_CONFIG")]
    config: Option<PathBuf>,
    /// Override one configuration key. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrackArgs {
    /// Detection file, or a directory with one `<sequence>.txt` per sequence.
    #[arg(long)]
    detections: PathBuf,
    /// Ego poses (`frame x y z` per line); a directory in multi-sequence mode.
    #[arg(long)]
    ego_poses: Option<PathBuf>,
    /// Feature sidecar CSV; a directory of `<sequence>.csv` in multi-sequence mode.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Result file, or output directory in multi-sequence mode.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth labels: a file, or a directory of `<sequence>.txt`.
    #[arg(long)]
    gt: PathBuf,
    /// Tracker results matching `--gt` (file or directory).
    #[arg(long)]
    results: PathBuf,
    /// 3D IoU needed for a true positive [default: from config, 0.25].
    #[arg(long)]
    iou_thres: Option<f64>,
    /// CSV report [default: eval.csv beside the results].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct AblateArgs {
    /// Scenario spec file.
    #[arg(long)]
    scenario: PathBuf,
    /// Sweep axis `key:v1,v2,...`; repeat for a cross-product.
    #[arg(long, required = true)]
    sweep: Vec<String>,
    /// Seeds per cell, counting up from the scenario's seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// CSV with one row per cell.
    #[arg(long, default_value = "ablation.csv")]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario spec file [default: built-in scenario].
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Replace the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Bad invocation: reported with the usage line and exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        usage(format!("{what} `{}` does not exist", path.display()))
    }
}

fn load_config(args: &ConfigArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(p) => {
            require(p, "config file")?;
            read_config(p)?
        }
        None => Config::default(),
    };
    for o in &args.overrides {
        if let Err(e) = cfg.set_override(o) {
            return usage(format!("--set {o}: {e}"));
        }
    }
    Ok(cfg)
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?)
}

fn txt_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    v.sort();
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

// ------------------------------------------------------------------ track

struct Sequence {
    name: String,
    detections: PathBuf,
    ego: Option<PathBuf>,
    features: Option<PathBuf>,
    out: PathBuf,
}

/// Resolve sequences and the manifest location.
fn sequences(a: &TrackArgs) -> Result<(Vec<Sequence>, PathBuf)> {
    require(&a.detections, "detections path")?;
    for (p, what) in [
        (&a.ego_poses, "ego-pose path"),
        (&a.features, "feature path"),
    ] {
        if let Some(p) = p {
            require(p, what)?;
        }
    }
    if !a.detections.is_dir() {
        let seq = Sequence {
            name: stem(&a.detections),
            detections: a.detections.clone(),
            ego: a.ego_poses.clone(),
            features: a.features.clone(),
            out: a.out.clone(),
        };
        return Ok((vec![seq], a.out.with_extension("manifest.json")));
    }
    let sibling =
        |dir: &Option<PathBuf>, name: &str, ext: &str, what: &str| -> Result<Option<PathBuf>> {
            match dir {
                None => Ok(None),
                Some(d) if d.is_dir() => {
                    let p = d.join(format!("{name}.{ext}"));
                    Ok(p.exists().then_some(p))
                }
                Some(d) => usage(format!(
                    "{what} `{}` must be a directory when --detections is",
                    d.display()
                )),
            }
        };
    let files = txt_files(&a.detections)?;
    if files.is_empty() {
        return usage(format!(
            "no .txt detection files in `{}`",
            a.detections.display()
        ));
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut seqs = Vec::new();
    for f in files {
        let name = stem(&f);
        seqs.push(Sequence {
            ego: sibling(&a.ego_poses, &name, "txt", "--ego-poses")?,
            features: sibling(&a.features, &name, "csv", "--features")?,
            out: a.out.join(format!("{name}.txt")),
            detections: f,
            name,
        });
    }
    Ok((seqs, a.out.join("manifest.json")))
}

#[derive(Serialize)]
struct SequenceSummary {
    name: String,
    frames: usize,
    records: usize,
    births: u64,
    skipped_classes: usize,
    normalized_scores: bool,
    frames_per_second: f64,
    #[serde(skip)]
    tracking: Duration,
    #[serde(skip)]
    stages: StageTimings,
    #[serde(skip)]
    io: Duration,
}

fn track_one(seq: &Sequence, cfg: &Config, tcfg: &TrackerConfig) -> Result<SequenceSummary> {
    let t0 = Instant::now();
    let det = read_kitti_detections(&seq.detections)?;
    let ego = seq.ego.as_deref().map(read_ego_poses).transpose()?;
    let min_frames = ego
        .as_ref()
        .and_then(|e| e.0.keys().next_back())
        .map_or(0, |&f| f as usize + 1);
    let mut frames = detections_to_frames(det.detections, cfg.run.frame_rate, min_frames);
    if let Some(e) = &ego {
        e.apply(&mut frames);
    }
    if let Some(p) = &seq.features {
        attach_features(&mut frames, &read_feature_sidecar(p)?)?;
    }
    let read_io = t0.elapsed();

    let run = run_sequence(&frames, tcfg, cfg.run.prefilter_threshold)
        .with_context(|| format!("tracking {}", seq.name))?;

    let t1 = Instant::now();
    write_tracks(&seq.out, &run.records)?;
    Ok(SequenceSummary {
        name: seq.name.clone(),
        frames: run.frames,
        records: run.records.len(),
        births: run.births,
        skipped_classes: det.skipped_classes,
        normalized_scores: det.normalized_scores,
        frames_per_second: run.frames_per_second(),
        tracking: run.elapsed,
        stages: run.timings,
        io: read_io + t1.elapsed(),
    })
}

fn cmd_track(a: &TrackArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = load_config(&a.cfg)?;
    let (seqs, manifest_path) = sequences(a)?;
    let tcfg = cfg.tracker_config();
    let summaries = worker_pool(cfg.run.workers)?.install(|| {
        seqs.par_iter()
            .map(|s| track_one(s, &cfg, &tcfg))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut stages = StageTimings::default();
    let (mut tracking, mut io, mut frames) = (Duration::ZERO, Duration::ZERO, 0);
    for s in &summaries {
        println!(
            "{}: {} frames, {} records, {} tracks born, {:.0} frames/s",
            s.name, s.frames, s.records, s.births, s.frames_per_second
        );
        if s.skipped_classes > 0 {
            println!("  skipped {} non-person detections", s.skipped_classes);
        }
        if s.normalized_scores {
            println!("  confidences outside [0, 1]: min-max normalized");
        }
        stages.predict += s.stages.predict;
        stages.associate += s.stages.associate;
        stages.lifecycle += s.stages.lifecycle;
        tracking += s.tracking;
        io += s.io;
        frames += s.frames;
    }
    let timing = Timing::new(frames, tracking, stages, io, start.elapsed());
    println!(
        "total: {} frames at {:.0} frames/s (predict {:.1} ms, associate {:.1} ms, lifecycle {:.1} ms, io {:.1} ms)",
        frames, timing.frames_per_second, timing.predict_ms, timing.associate_ms, timing.lifecycle_ms, timing.io_ms
    );

    let mut m = RunManifest::new("track", Some(&cfg), cfg.run.seed);
    m.inputs.extend(a.cfg.config.iter().cloned());
    for s in &seqs {
        m.inputs.push(s.detections.clone());
        m.inputs.extend(s.ego.iter().cloned());
        m.inputs.extend(s.features.iter().cloned());
        m.outputs.push(s.out.clone());
    }
    m.timing = timing;
    m.details = json!({ "sequences": summaries });
    m.write(&manifest_path)
}

// ------------------------------------------------------------------- eval

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = load_config(&a.cfg)?;
    let iou = a.iou_thres.unwrap_or(cfg.run.iou_thres);
    if !(iou > 0.0 && iou <= 1.0) {
        return usage(format!("--iou-thres must be in (0, 1], got {iou}"));
    }
    require(&a.gt, "ground-truth path")?;
    require(&a.results, "results path")?;

    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.results.is_dir() {
        if !a.gt.is_dir() {
            return usage("--gt must be a directory when --results is");
        }
        let files = txt_files(&a.results)?;
        if files.is_empty() {
            return usage(format!("no .txt result files in `{}`", a.results.display()));
        }
        let mut v = Vec::new();
        for r in files {
            let name = stem(&r);
            let g = a.gt.join(format!("{name}.txt"));
            require(&g, "ground truth for sequence")?;
            v.push((name, g, r));
        }
        v
    } else {
        vec![(stem(&a.results), a.gt.clone(), a.results.clone())]
    };

    let mut loaded = Vec::new();
    for (name, g, r) in &pairs {
        loaded.push((name.as_str(), read_labels(g)?, read_tracks(r)?));
    }
    let data: Vec<SequenceData<'_>> = loaded
        .iter()
        .map(|(name, gt, pred)| SequenceData { name, gt, pred })
        .collect();
    let report = evaluate(&data, iou);
    print!("{}", report.to_table());
    if report.aggregate.samota.is_none() {
        println!("results carry no scores: sAMOTA, AMOTA and AMOTP omitted");
    }

    let out = a.out.clone().unwrap_or_else(|| {
        if a.results.is_dir() {
            a.results.join("eval.csv")
        } else {
            a.results.with_extension("eval.csv")
        }
    });
    std::fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;

    let mut m = RunManifest::new("eval", Some(&cfg), cfg.run.seed);
    m.inputs.extend(a.cfg.config.iter().cloned());
    for (_, g, r) in pairs {
        m.inputs.push(g);
        m.inputs.push(r);
    }
    m.outputs.push(out.clone());
    m.timing = Timing::wall_only(start.elapsed());
    m.details = json!({ "iou_thres": iou, "aggregate": report.aggregate });
    m.write(&out.with_extension("manifest.json"))
}

// ----------------------------------------------------------------- ablate

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = load_config(&a.cfg)?;
    require(&a.scenario, "scenario spec")?;
    let spec = ScenarioSpec::read(&a.scenario)?;
    let mut sweeps = Vec::new();
    for s in &a.sweep {
        match parse_sweep(s) {
            Ok(sw) => sweeps.push(sw),
            Err(e) => return usage(format!("--sweep {s}: {e}")),
        }
    }
    if a.seeds == 0 {
        return usage("--seeds must be at least 1");
    }
    let seeds: Vec<u64> = (0..a.seeds).map(|k| spec.seed.wrapping_add(k)).collect();
    let cells =
        worker_pool(cfg.run.workers)?.install(|| run_ablation(&cfg, &spec, &sweeps, &seeds))?;
    let csv = ablation_csv(&sweeps, &cells);
    print!("{csv}");
    std::fs::write(&a.out, &csv).with_context(|| format!("writing {}", a.out.display()))?;

    let mut m = RunManifest::new("ablate", Some(&cfg), spec.seed);
    m.inputs.extend(a.cfg.config.iter().cloned());
    m.inputs.push(a.scenario.clone());
    m.outputs.push(a.out.clone());
    m.timing = Timing::wall_only(start.elapsed());
    m.details = json!({
        "scenario": spec.to_spec_string(),
        "sweeps": a.sweep,
        "seeds": seeds,
    });
    m.write(&a.out.with_extension("manifest.json"))
}

// --------------------------------------------------------------- generate

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let start = Instant::now();
    let mut spec = match &a.spec {
        Some(p) => {
            require(p, "scenario spec")?;
            ScenarioSpec::read(p)?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let sc = generate(&spec)?;
    sc.write(&a.out_dir)?;
    let spec_path = a.out_dir.join("spec.toml");
    std::fs::write(&spec_path, spec.to_spec_string())
        .with_context(|| format!("writing {}", spec_path.display()))?;

    let mut outputs = vec![
        a.out_dir.join("gt.txt"),
        a.out_dir.join("detections.txt"),
        spec_path,
    ];
    if sc.feature_sidecar().is_some() {
        outputs.push(a.out_dir.join("features.csv"));
    }
    println!(
        "{} frames, {} ground-truth boxes, {} detections -> {}",
        sc.n_frames,
        sc.gt.len(),
        sc.detections.len(),
        a.out_dir.display()
    );

    let mut m = RunManifest::new("generate", None, spec.seed);
    m.inputs.extend(a.spec.iter().cloned());
    m.outputs = outputs;
    m.timing = Timing::wall_only(start.elapsed());
    m.details = json!({
        "frames": sc.n_frames,
        "frame_rate": sc.frame_rate,
        "gt_boxes": sc.gt.len(),
        "detections": sc.detections.len(),
    });
    m.write(&a.out_dir.join("manifest.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Track(a) => ("track", cmd_track(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Ablate(a) => ("ablate", cmd_ablate(a)),
        Command::Generate(a) => ("generate", cmd_generate(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}\n");
            let mut cmd = Cli::command().bin_name("spbtrack");
            cmd.build();
            let sub = cmd.find_subcommand_mut(name).expect("known subcommand");
            eprintln!("{}", sub.render_usage());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
