//! Running the tracker over sequences, and ablation sweeps over synthetic
//! scenarios.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{Config, FrameInput, TrackRecord, CONFIG_KEYS};
use crate::lifecycle::{StageTimings, Tracker, TrackerConfig};
use crate::metrics::{evaluate, EvalRow, SequenceData, CSV_COLUMNS};
use crate::simgen::{generate, ScenarioSpec};

/// Drop detections below `threshold`.
pub fn prefilter(frames: &[FrameInput], threshold: f64) -> Vec<FrameInput> {
    frames
        .iter()
        .map(|f| FrameInput {
            detections: f
                .detections
                .iter()
                .filter(|d| d.confidence >= threshold)
                .cloned()
                .collect(),
            ..f.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TrackRecord>,
    pub timings: StageTimings,
    pub frames: usize,
    pub elapsed: Duration,
    pub births: u64,
}

impl RunOutput {
    pub fn frames_per_second(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.frames as f64 / s
        } else {
            f64::INFINITY
        }
    }
}

/// Track one sequence frame by frame.
pub fn run_sequence(
    frames: &[FrameInput],
    cfg: &TrackerConfig,
    prefilter_threshold: f64,
) -> Result<RunOutput> {
    let start = Instant::now();
    let mut tracker = Tracker::new(cfg.clone());
    let mut records = Vec::new();
    for f in frames {
        let kept;
        let input = if prefilter_threshold > 0.0 {
            kept = FrameInput {
                detections: f
                    .detections
                    .iter()
                    .filter(|d| d.confidence >= prefilter_threshold)
                    .cloned()
                    .collect(),
                ..f.clone()
            };
            &kept
        } else {
            f
        };
        for o in tracker.step_frame(input)? {
            records.push(TrackRecord {
                frame: f.frame,
                id: o.id,
                class_label: "Pedestrian".into(),
                bbox: o.bbox,
                score: Some(o.score),
            });
        }
    }
    Ok(RunOutput {
        records,
        timings: tracker.timings(),
        frames: frames.len(),
        elapsed: start.elapsed(),
        births: tracker.births(),
    })
}

/// Generate a scenario, optionally decimate it, track it and evaluate.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &Config, decimate: u32) -> Result<EvalRow> {
    let mut scenario = generate(spec)?;
    if decimate > 1 {
        scenario = scenario.decimate(decimate)?;
    }
    let out = run_sequence(
        &scenario.frames(),
        &cfg.tracker_config(),
        cfg.run.prefilter_threshold,
    )?;
    let report = evaluate(
        &[SequenceData {
            name: "scenario",
            gt: &scenario.gt,
            pred: &out.records,
        }],
        cfg.run.iou_thres,
    );
    Ok(report.aggregate)
}

/// Sweep axis: `key:v1,v2,...`. Keys are configuration keys or
/// `decimate` (frame decimation factor of the scenario).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

pub const DECIMATE_KEY: &str = "decimate";

pub fn parse_sweep(s: &str) -> Result<Sweep> {
    let (key, vals) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidSweep(format!("expected key:v1,v2,..., got `{s}`")))?;
    let key = key.trim().to_string();
    if key != DECIMATE_KEY && !CONFIG_KEYS.contains(&key.as_str()) {
        return Err(Error::InvalidSweep(format!("unknown sweep key `{key}`")));
    }
    let values: Vec<String> = vals
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::InvalidSweep(format!("sweep `{key}` has no values")));
    }
    Ok(Sweep { key, values })
}

/// Seed-averaged metrics of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub assignments: Vec<(String, String)>,
    pub seeds: usize,
    pub samota: f64,
    pub amota: f64,
    pub amotp: f64,
    pub mota: f64,
    pub motp: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub ids: f64,
    pub ids_best_mota: f64,
    pub ids_max_recall: f64,
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub gt: f64,
}

impl CellResult {
    fn mean(assignments: Vec<(String, String)>, rows: &[EvalRow]) -> Self {
        let n = rows.len() as f64;
        let m = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            assignments,
            seeds: rows.len(),
            samota: m(&|r| r.samota.unwrap_or(0.0)),
            amota: m(&|r| r.amota.unwrap_or(0.0)),
            amotp: m(&|r| r.amotp.unwrap_or(0.0)),
            mota: m(&|r| r.mota),
            motp: m(&|r| r.motp),
            recall: m(&|r| r.recall),
            precision: m(&|r| r.precision),
            f1: m(&|r| r.f1),
            ids: m(&|r| r.ids as f64),
            ids_best_mota: m(&|r| r.ids_best_mota.unwrap_or(0) as f64),
            ids_max_recall: m(&|r| r.ids_max_recall.unwrap_or(0) as f64),
            tp: m(&|r| r.tp as f64),
            fp: m(&|r| r.fp as f64),
            fn_: m(&|r| r.fn_ as f64),
            gt: m(&|r| r.gt as f64),
        }
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.assignments
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn cross_product(sweeps: &[Sweep]) -> Vec<Vec<(String, String)>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for s in sweeps {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                s.values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((s.key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

/// Run every cell of the cross-product of `sweeps` on `scenario` once per
/// seed and average. Cells and seeds run in parallel; output order is the
/// cross-product order, so results are deterministic.
pub fn run_ablation(
    base: &Config,
    scenario: &ScenarioSpec,
    sweeps: &[Sweep],
    seeds: &[u64],
) -> Result<Vec<CellResult>> {
    if seeds.is_empty() {
        return Err(Error::InvalidSweep("no seeds".into()));
    }
    let cells = cross_product(sweeps);
    let mut configs = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut cfg = base.clone();
        let mut factor = 1u32;
        for (k, v) in cell {
            if k == DECIMATE_KEY {
                factor = v
                    .parse()
                    .ok()
                    .filter(|&f| f >= 1)
                    .ok_or_else(|| Error::InvalidSweep(format!("bad decimate value `{v}`")))?;
            } else {
                cfg.set_override(&format!("{k}={v}"))?;
            }
        }
        configs.push((cfg, factor));
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows: Vec<EvalRow> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let spec = ScenarioSpec {
                seed,
                ..scenario.clone()
            };
            let (cfg, factor) = &configs[c];
            run_scenario(&spec, cfg, *factor)
        })
        .collect::<Result<_>>()?;
    Ok(cells
        .into_iter()
        .zip(rows.chunks(seeds.len()))
        .map(|(a, r)| CellResult::mean(a, r))
        .collect())
}

/// One row per cell: the swept values, then every metric column.
pub fn ablation_csv(sweeps: &[Sweep], cells: &[CellResult]) -> String {
    let mut s = String::new();
    for sw in sweeps {
        let _ = write!(s, "{},", sw.key);
    }
    let _ = writeln!(s, "seeds,{}", CSV_COLUMNS[1..].join(","));
    for c in cells {
        for (_, v) in &c.assignments {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            c.seeds,
            c.samota,
            c.amota,
            c.amotp,
            c.mota,
            c.motp,
            c.recall,
            c.precision,
            c.f1,
            c.ids,
            c.ids_best_mota,
            c.ids_max_recall,
            c.tp,
            c.fp,
            c.fn_,
            c.gt
        );
    }
    s
}
