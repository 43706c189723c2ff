//! CLEAR-MOT and recall-swept (s)AMOTA evaluation with 3D-IoU matching.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::assoc::solve_assignment;
use crate::error::{Error, Result};
use crate::geometry::{iou3d, Box3D};
use crate::io::TrackRecord;

pub const DEFAULT_IOU_THRES: f64 = 0.25;

/// Recall sample points of the sweep, including the discarded zero point.
pub const NUM_SAMPLE_POINTS: usize = 41;

/// Result of matching one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    /// `(gt index, pred index, iou)`, ordered by gt index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub fp: usize,
    pub fn_: usize,
}

impl FrameMatch {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }
}

fn may_overlap(a: &Box3D, b: &Box3D) -> bool {
    let ra = 0.5 * a.w.hypot(a.l);
    let rb = 0.5 * b.w.hypot(b.l);
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy < (ra + rb) * (ra + rb) && (a.z - b.z).abs() < 0.5 * (a.h + b.h)
}

fn iou_matrix(gt: &[Box3D], pred: &[Box3D]) -> DMatrix<f64> {
    DMatrix::from_fn(gt.len(), pred.len(), |i, j| {
        if may_overlap(&gt[i], &pred[j]) {
            iou3d(&gt[i], &pred[j])
        } else {
            0.0
        }
    })
}

/// Maximum-total-IoU matching among pairs with IoU ≥ `iou_thres`.
fn match_iou(iou: &DMatrix<f64>, iou_thres: f64) -> Vec<(usize, usize)> {
    if iou.nrows() == 0 || iou.ncols() == 0 {
        return Vec::new();
    }
    // Sub-threshold pairs score zero, so the optimum over the masked matrix
    // is the optimum over eligible pairs.
    let masked = iou.map(|v| if v >= iou_thres { v } else { 0.0 });
    solve_assignment(&masked, iou_thres).matches
}

/// Optimal one-to-one matching of one frame.
pub fn match_frame(gt: &[Box3D], pred: &[Box3D], iou_thres: f64) -> FrameMatch {
    let iou = iou_matrix(gt, pred);
    let pairs: Vec<(usize, usize, f64)> = match_iou(&iou, iou_thres)
        .into_iter()
        .map(|(g, p)| (g, p, iou[(g, p)]))
        .collect();
    FrameMatch {
        fp: pred.len() - pairs.len(),
        fn_: gt.len() - pairs.len(),
        pairs,
    }
}

/// Accumulated CLEAR-MOT counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MotCounts {
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    /// Sum of IoU over true positives.
    pub iou_sum: f64,
}

impl MotCounts {
    pub fn add(&mut self, o: &MotCounts) {
        self.gt += o.gt;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.ids += o.ids;
        self.iou_sum += o.iou_sum;
    }

    /// `1 − (FP + FN + IDs) / GT`; without ground truth the denominator is 1.
    pub fn mota(&self) -> f64 {
        1.0 - (self.fp + self.fn_ + self.ids) as f64 / self.gt.max(1) as f64
    }

    /// Mean IoU of true positives; 0 without any.
    pub fn motp(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.iou_sum / self.tp as f64
        }
    }

    /// 1 when there is nothing to recall.
    pub fn recall(&self) -> f64 {
        if self.gt == 0 {
            1.0
        } else {
            self.tp as f64 / self.gt as f64
        }
    }

    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Scaled MOTA at recall target `r`, clamped to `[0, 1]`.
    pub fn smota(&self, r: f64) -> f64 {
        let gt = self.gt as f64;
        let err = (self.fp + self.fn_ + self.ids) as f64;
        (1.0 - (err - (1.0 - r) * gt) / (r * gt)).clamp(0.0, 1.0)
    }
}

struct PreparedFrame {
    gt_ids: Vec<u64>,
    pred_ids: Vec<u64>,
    pred_scores: Vec<Option<f64>>,
    iou: DMatrix<f64>,
}

/// One sequence with its pairwise IoUs computed once, so repeated
/// thresholded evaluations only re-solve the assignments.
pub struct PreparedSequence {
    frames: Vec<PreparedFrame>,
}

impl PreparedSequence {
    pub fn new(gt: &[TrackRecord], pred: &[TrackRecord]) -> Self {
        let mut by_frame: BTreeMap<u32, (Vec<&TrackRecord>, Vec<&TrackRecord>)> = BTreeMap::new();
        for r in gt {
            by_frame.entry(r.frame).or_default().0.push(r);
        }
        for r in pred {
            by_frame.entry(r.frame).or_default().1.push(r);
        }
        let frames = by_frame
            .into_values()
            .map(|(g, p)| {
                let gb: Vec<Box3D> = g.iter().map(|r| r.bbox).collect();
                let pb: Vec<Box3D> = p.iter().map(|r| r.bbox).collect();
                PreparedFrame {
                    gt_ids: g.iter().map(|r| r.id).collect(),
                    pred_ids: p.iter().map(|r| r.id).collect(),
                    pred_scores: p.iter().map(|r| r.score).collect(),
                    iou: iou_matrix(&gb, &pb),
                }
            })
            .collect();
        Self { frames }
    }

    pub fn has_all_scores(&self) -> bool {
        self.frames
            .iter()
            .all(|f| f.pred_scores.iter().all(Option::is_some))
    }

    /// Counts over predictions with score ≥ `min_score` (all when `None`).
    /// Scores of true positives are appended to `tp_scores` if given.
    pub fn evaluate(
        &self,
        iou_thres: f64,
        min_score: Option<f64>,
        mut tp_scores: Option<&mut Vec<f64>>,
    ) -> MotCounts {
        let mut c = MotCounts::default();
        let mut last_match: HashMap<u64, u64> = HashMap::new();
        for f in &self.frames {
            let keep: Vec<usize> = (0..f.pred_ids.len())
                .filter(|&j| match (min_score, f.pred_scores[j]) {
                    (Some(t), Some(s)) => s >= t,
                    (Some(_), None) => false,
                    (None, _) => true,
                })
                .collect();
            let sub = DMatrix::from_fn(f.gt_ids.len(), keep.len(), |i, j| f.iou[(i, keep[j])]);
            let pairs = match_iou(&sub, iou_thres);
            c.gt += f.gt_ids.len();
            c.tp += pairs.len();
            c.fp += keep.len() - pairs.len();
            c.fn_ += f.gt_ids.len() - pairs.len();
            for (g, j) in pairs {
                let p = keep[j];
                c.iou_sum += f.iou[(g, p)];
                let pid = f.pred_ids[p];
                if let Some(prev) = last_match.insert(f.gt_ids[g], pid) {
                    if prev != pid {
                        c.ids += 1;
                    }
                }
                if let (Some(out), Some(s)) = (tp_scores.as_deref_mut(), f.pred_scores[p]) {
                    out.push(s);
                }
            }
        }
        c
    }
}

/// CLEAR-MOT counts of one sequence over all predictions.
pub fn clear_mot(gt: &[TrackRecord], pred: &[TrackRecord], iou_thres: f64) -> MotCounts {
    PreparedSequence::new(gt, pred).evaluate(iou_thres, None, None)
}

/// Score thresholds and recall targets of the sweep. `scores` are the
/// true-positive scores over all predictions. The zero-recall point is
/// dropped, so at most `NUM_SAMPLE_POINTS − 1` points remain.
pub fn recall_thresholds(scores: &[f64], num_gt: usize) -> Vec<(f64, f64)> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let n = s.len();
    let step = 1.0 / (NUM_SAMPLE_POINTS as f64 - 1.0);
    let mut current = 0.0;
    let mut out = Vec::new();
    for (i, &score) in s.iter().enumerate() {
        let l = (i + 1) as f64 / num_gt as f64;
        let r = if i + 1 < n {
            (i + 2) as f64 / num_gt as f64
        } else {
            l
        };
        if (r - current) < (current - l) && i + 1 < n {
            continue;
        }
        out.push((score, current));
        current += step;
    }
    if !out.is_empty() {
        out.remove(0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub recall_target: f64,
    pub counts: MotCounts,
    pub smota: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub samota: f64,
    pub amota: f64,
    pub amotp: f64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Sweep point with the highest MOTA (earliest on ties).
    pub fn best_mota(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&SweepPoint>, p| match best {
                Some(b) if b.counts.mota() >= p.counts.mota() => Some(b),
                _ => Some(p),
            })
    }

    /// Sweep point with the highest recall (earliest on ties).
    pub fn max_recall(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&SweepPoint>, p| match best {
                Some(b) if b.counts.recall() >= p.counts.recall() => Some(b),
                _ => Some(p),
            })
    }
}

/// Recall-swept AMOTA, sAMOTA and AMOTP over the union of `sequences`.
/// Every averaged quantity is divided by `NUM_SAMPLE_POINTS − 1`, so
/// recall levels the tracker never reaches contribute zero.
pub fn samota(sequences: &[PreparedSequence], iou_thres: f64) -> Result<SweepResult> {
    if !sequences.iter().all(PreparedSequence::has_all_scores) {
        return Err(Error::MissingScores);
    }
    let mut scores = Vec::new();
    let mut num_gt = 0;
    for s in sequences {
        num_gt += s.evaluate(iou_thres, None, Some(&mut scores)).gt;
    }
    let thresholds = recall_thresholds(&scores, num_gt);
    let points: Vec<SweepPoint> = thresholds
        .par_iter()
        .map(|&(threshold, recall_target)| {
            let mut counts = MotCounts::default();
            for s in sequences {
                counts.add(&s.evaluate(iou_thres, Some(threshold), None));
            }
            SweepPoint {
                threshold,
                recall_target,
                counts,
                smota: counts.smota(recall_target),
            }
        })
        .collect();
    let denom = NUM_SAMPLE_POINTS as f64 - 1.0;
    Ok(SweepResult {
        samota: points.iter().map(|p| p.smota).sum::<f64>() / denom,
        amota: points.iter().map(|p| p.counts.mota()).sum::<f64>() / denom,
        amotp: points.iter().map(|p| p.counts.motp()).sum::<f64>() / denom,
        points,
    })
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub name: String,
    pub samota: Option<f64>,
    pub amota: Option<f64>,
    pub amotp: Option<f64>,
    pub mota: f64,
    pub motp: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Identity switches over all predictions.
    pub ids: usize,
    /// Identity switches at the sweep point with the highest MOTA.
    pub ids_best_mota: Option<usize>,
    /// Identity switches at the sweep point with the highest recall.
    pub ids_max_recall: Option<usize>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt: usize,
}

impl EvalRow {
    fn build(name: &str, seqs: &[PreparedSequence], iou_thres: f64) -> Self {
        let mut c = MotCounts::default();
        for s in seqs {
            c.add(&s.evaluate(iou_thres, None, None));
        }
        let sweep = samota(seqs, iou_thres).ok();
        Self {
            name: name.to_string(),
            samota: sweep.as_ref().map(|s| s.samota),
            amota: sweep.as_ref().map(|s| s.amota),
            amotp: sweep.as_ref().map(|s| s.amotp),
            mota: c.mota(),
            motp: c.motp(),
            recall: c.recall(),
            precision: c.precision(),
            f1: c.f1(),
            ids: c.ids,
            ids_best_mota: sweep
                .as_ref()
                .and_then(|s| s.best_mota())
                .map(|p| p.counts.ids),
            ids_max_recall: sweep
                .as_ref()
                .and_then(|s| s.max_recall())
                .map(|p| p.counts.ids),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            gt: c.gt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub sequences: Vec<EvalRow>,
    pub aggregate: EvalRow,
}

/// A named sequence to evaluate.
pub struct SequenceData<'a> {
    pub name: &'a str,
    pub gt: &'a [TrackRecord],
    pub pred: &'a [TrackRecord],
}

/// Per-sequence rows plus an aggregate over all sequences pooled.
pub fn evaluate(sequences: &[SequenceData<'_>], iou_thres: f64) -> EvalReport {
    let prepared: Vec<PreparedSequence> = sequences
        .par_iter()
        .map(|s| PreparedSequence::new(s.gt, s.pred))
        .collect();
    let rows: Vec<EvalRow> = sequences
        .par_iter()
        .zip(prepared.par_iter())
        .map(|(s, p)| EvalRow::build(s.name, std::slice::from_ref(p), iou_thres))
        .collect();
    EvalReport {
        sequences: rows,
        aggregate: EvalRow::build("all", &prepared, iou_thres),
    }
}

pub const CSV_COLUMNS: [&str; 16] = [
    "sequence",
    "sAMOTA",
    "AMOTA",
    "AMOTP",
    "MOTA",
    "MOTP",
    "recall",
    "precision",
    "F1",
    "IDs",
    "IDs_best_mota",
    "IDs_max_recall",
    "TP",
    "FP",
    "FN",
    "GT",
];

fn opt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn opt_u(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalRow {
    /// Metric fields in `CSV_COLUMNS` order, without the leading name.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            opt_f(self.samota),
            opt_f(self.amota),
            opt_f(self.amotp),
            format!("{:.6}", self.mota),
            format!("{:.6}", self.motp),
            format!("{:.6}", self.recall),
            format!("{:.6}", self.precision),
            format!("{:.6}", self.f1),
            self.ids.to_string(),
            opt_u(self.ids_best_mota),
            opt_u(self.ids_max_recall),
            self.tp.to_string(),
            self.fp.to_string(),
            self.fn_.to_string(),
            self.gt.to_string(),
        ]
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = CSV_COLUMNS.join(",");
        s.push('\n');
        for r in self
            .sequences
            .iter()
            .chain(std::iter::once(&self.aggregate))
        {
            let _ = writeln!(s, "{},{}", r.name, r.csv_fields().join(","));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>5} {:>6} {:>6} {:>6}",
            "sequence",
            "sAMOTA",
            "AMOTA",
            "MOTA",
            "MOTP",
            "recall",
            "prec",
            "F1",
            "IDs",
            "TP",
            "FP",
            "FN"
        );
        let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or("-".into());
        for r in self
            .sequences
            .iter()
            .chain(std::iter::once(&self.aggregate))
        {
            let _ = writeln!(
                s,
                "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>5} {:>6} {:>6} {:>6}",
                r.name,
                pct(r.samota),
                pct(r.amota),
                pct(Some(r.mota)),
                pct(Some(r.motp)),
                pct(Some(r.recall)),
                pct(Some(r.precision)),
                pct(Some(r.f1)),
                r.ids,
                r.tp,
                r.fp,
                r.fn_
            );
        }
        s
    }
}
