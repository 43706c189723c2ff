//! Independent oracles shared by the integration tests. None of these call
//! into the code they check, beyond reading plain box and record fields.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use spbtrack::{Box3D, TrackRecord};

pub fn bx(x: f64, y: f64, z: f64, yaw: f64, w: f64, l: f64, h: f64) -> Box3D {
    Box3D::new(x, y, z, yaw, w, l, h).unwrap()
}

pub fn rec(frame: u32, id: u64, b: Box3D, score: Option<f64>) -> TrackRecord {
    TrackRecord {
        frame,
        id,
        class_label: "Pedestrian".into(),
        bbox: b,
        score,
    }
}

// ---------------------------------------------------------------- geometry

fn corners(b: &Box3D) -> [[f64; 2]; 4] {
    let (s, c) = b.yaw.sin_cos();
    let mut out = [[0.0; 2]; 4];
    for (k, (u, v)) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .into_iter()
        .enumerate()
    {
        let (u, v) = (u * b.l / 2.0, v * b.w / 2.0);
        out[k] = [b.x + c * u - s * v, b.y + s * u + c * v];
    }
    out
}

fn inside_box(b: &Box3D, p: [f64; 3]) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let (dx, dy) = (p[0] - b.x, p[1] - b.y);
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= b.l / 2.0 && v.abs() <= b.w / 2.0 && (p[2] - b.z).abs() <= b.h / 2.0
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Gift-wrapping hull, counter-clockwise.
fn gift_wrap(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let start = (0..pts.len())
        .min_by(|&i, &j| {
            pts[i][0]
                .total_cmp(&pts[j][0])
                .then(pts[i][1].total_cmp(&pts[j][1]))
        })
        .unwrap();
    let mut hull = vec![];
    let mut p = start;
    loop {
        hull.push(pts[p]);
        let mut q = (p + 1) % pts.len();
        for r in 0..pts.len() {
            if cross(pts[p], pts[q], pts[r]) < 0.0 {
                q = r;
            }
        }
        p = q;
        if p == start || hull.len() > pts.len() {
            break;
        }
    }
    hull
}

fn inside_convex(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    (0..poly.len()).all(|i| cross(poly[i], poly[(i + 1) % poly.len()], p) >= 0.0)
}

/// Monte-Carlo `(iou, giou)` from `n` uniform samples over the box spanned
/// by both boxes.
pub fn mc_overlap(a: &Box3D, b: &Box3D, n: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mut pts: Vec<[f64; 2]> = corners(a).to_vec();
    pts.extend(corners(b));
    let hull = gift_wrap(&pts);
    let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p[0]), hi.max(p[0]))
    });
    let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p[1]), hi.max(p[1]))
    });
    let z0 = (a.z - a.h / 2.0).min(b.z - b.h / 2.0);
    let z1 = (a.z + a.h / 2.0).max(b.z + b.h / 2.0);
    let (mut inter, mut union, mut enc) = (0usize, 0usize, 0usize);
    for _ in 0..n {
        let p = [
            rng.random_range(x0..x1),
            rng.random_range(y0..y1),
            rng.random_range(z0..z1),
        ];
        let (ia, ib) = (inside_box(a, p), inside_box(b, p));
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
        enc += inside_convex(&hull, [p[0], p[1]]) as usize;
    }
    let iou = inter as f64 / union as f64;
    let giou = iou - (enc - union) as f64 / enc as f64;
    (iou, giou)
}

/// MCIoU from its defining formulas, given GIoU.
pub fn mciou_oracle(s: &Box3D, t: &Box3D, giou: f64) -> f64 {
    let ratio_s = s.h / (s.w * s.l);
    let ratio_t = t.h / (t.w * t.l);
    let v = 4.0 / std::f64::consts::PI * (ratio_s.atan() - ratio_t.atan());
    if v == 0.0 {
        return giou;
    }
    let alpha = v * (v / (1.0 - giou).max(1e-9) + 1.0);
    giou + alpha
}

// -------------------------------------------------------------- assignment

/// Best total over all one-to-one assignments covering the smaller side.
pub fn brute_force_best(m: &DMatrix<f64>) -> f64 {
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return 0.0;
    }
    let transpose = r > c;
    let m = if transpose { m.transpose() } else { m.clone() };
    let mut used = vec![false; m.ncols()];
    fn rec(m: &DMatrix<f64>, row: usize, used: &mut [bool]) -> f64 {
        if row == m.nrows() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..m.ncols() {
            if !used[c] {
                used[c] = true;
                best = best.max(m[(row, c)] + rec(m, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    rec(&m, 0, &mut used)
}

// ------------------------------------------------------------------ filter

/// Constant-acceleration transition written out from the kinematics.
pub fn ca_transition(dt: f64) -> DMatrix<f64> {
    let mut f = DMatrix::<f64>::identity(11, 11);
    for (p, v, a) in [(0, 4, 6), (1, 5, 7)] {
        f[(p, v)] = dt;
        f[(p, a)] = dt * dt / 2.0;
        f[(v, a)] = dt;
    }
    f
}

pub fn selection() -> DMatrix<f64> {
    let mut h = DMatrix::<f64>::zeros(7, 11);
    for (row, col) in [0, 1, 2, 3, 8, 9, 10].into_iter().enumerate() {
        h[(row, col)] = 1.0;
    }
    h
}

/// Textbook linear Kalman filter. `q` is the per-step process noise.
pub struct TextbookKf {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl TextbookKf {
    pub fn new(
        x: DVector<f64>,
        p: DMatrix<f64>,
        dt: f64,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Self {
        Self {
            x,
            p,
            f: ca_transition(dt),
            h: selection(),
            q,
            r,
        }
    }

    pub fn step(&mut self, z: &DVector<f64>) {
        let x = &self.f * &self.x;
        let p = &self.f * &self.p * self.f.transpose() + &self.q;
        let s = &self.h * &p * self.h.transpose() + &self.r;
        let k = &p * self.h.transpose() * s.try_inverse().unwrap();
        self.x = &x + &k * (z - &self.h * &x);
        self.p = (DMatrix::identity(11, 11) - &k * &self.h) * p;
    }
}

// ----------------------------------------------------------------- metrics

/// Counts from the reference evaluation loop.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefCounts {
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub iou_sum: f64,
}

fn best_matching(iou: &[Vec<f64>], thres: f64) -> Vec<(usize, usize)> {
    // exhaustive search over partial matchings; fixtures are tiny
    fn go(
        iou: &[Vec<f64>],
        thres: f64,
        g: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (f64, Vec<(usize, usize)>),
        total: f64,
    ) {
        if g == iou.len() {
            if total > best.0 + 1e-12 {
                *best = (total, cur.clone());
            }
            return;
        }
        go(iou, thres, g + 1, used, cur, best, total);
        for p in 0..used.len() {
            if !used[p] && iou[g][p] >= thres {
                used[p] = true;
                cur.push((g, p));
                go(iou, thres, g + 1, used, cur, best, total + iou[g][p]);
                cur.pop();
                used[p] = false;
            }
        }
    }
    let np = iou.first().map_or(0, Vec::len);
    let mut best = (0.0, vec![]);
    go(
        iou,
        thres,
        0,
        &mut vec![false; np],
        &mut vec![],
        &mut best,
        0.0,
    );
    best.1
}

/// CLEAR-MOT over predictions with score ≥ `min_score`. `iou` is supplied by
/// the caller so the oracle stays independent of the matching code.
pub fn ref_clear_mot(
    gt: &[TrackRecord],
    pred: &[TrackRecord],
    thres: f64,
    min_score: Option<f64>,
    iou: &dyn Fn(&Box3D, &Box3D) -> f64,
) -> RefCounts {
    let mut frames: Vec<u32> = gt.iter().chain(pred).map(|r| r.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    let mut c = RefCounts::default();
    let mut last: HashMap<u64, u64> = HashMap::new();
    for f in frames {
        let g: Vec<&TrackRecord> = gt.iter().filter(|r| r.frame == f).collect();
        let p: Vec<&TrackRecord> = pred
            .iter()
            .filter(|r| r.frame == f)
            .filter(|r| min_score.is_none_or(|t| r.score.unwrap() >= t))
            .collect();
        let m: Vec<Vec<f64>> = g
            .iter()
            .map(|a| p.iter().map(|b| iou(&a.bbox, &b.bbox)).collect())
            .collect();
        let pairs = best_matching(&m, thres);
        c.gt += g.len();
        c.tp += pairs.len();
        c.fp += p.len() - pairs.len();
        c.fn_ += g.len() - pairs.len();
        for (gi, pi) in pairs {
            c.iou_sum += m[gi][pi];
            if let Some(prev) = last.insert(g[gi].id, p[pi].id) {
                if prev != p[pi].id {
                    c.ids += 1;
                }
            }
        }
    }
    c
}

/// The AB3DMOT recall sweep, transcribed step by step.
pub fn ref_get_thresholds(scores: &[f64], num_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let num_sample_pts = 41.0;
    let mut scores = scores.to_vec();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scores.reverse();
    let mut current_recall = 0.0;
    let mut thresholds = vec![];
    let mut recall_thresholds = vec![];
    for (i, &score) in scores.iter().enumerate() {
        let l_recall = (i + 1) as f64 / num_gt as f64;
        let r_recall = if i < scores.len() - 1 {
            (i + 2) as f64 / num_gt as f64
        } else {
            l_recall
        };
        if (r_recall - current_recall) < (current_recall - l_recall) && i < scores.len() - 1 {
            continue;
        }
        thresholds.push(score);
        recall_thresholds.push(current_recall);
        current_recall += 1.0 / (num_sample_pts - 1.0);
    }
    if thresholds.is_empty() {
        return (thresholds, recall_thresholds);
    }
    (thresholds[1..].to_vec(), recall_thresholds[1..].to_vec())
}

/// `(sAMOTA, AMOTA, AMOTP)` by the reference loop.
pub fn ref_samota(
    gt: &[TrackRecord],
    pred: &[TrackRecord],
    thres: f64,
    iou: &dyn Fn(&Box3D, &Box3D) -> f64,
) -> (f64, f64, f64) {
    // scores of true positives over the unthresholded output
    let mut frames: Vec<u32> = gt.iter().chain(pred).map(|r| r.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    let mut tp_scores = vec![];
    for f in frames {
        let g: Vec<&TrackRecord> = gt.iter().filter(|r| r.frame == f).collect();
        let p: Vec<&TrackRecord> = pred.iter().filter(|r| r.frame == f).collect();
        let m: Vec<Vec<f64>> = g
            .iter()
            .map(|a| p.iter().map(|b| iou(&a.bbox, &b.bbox)).collect())
            .collect();
        for (_, pi) in best_matching(&m, thres) {
            tp_scores.push(p[pi].score.unwrap());
        }
    }
    let (ths, recalls) = ref_get_thresholds(&tp_scores, gt.len());
    let (mut s, mut a, mut p) = (0.0, 0.0, 0.0);
    for (t, r) in ths.iter().zip(&recalls) {
        let c = ref_clear_mot(gt, pred, thres, Some(*t), iou);
        let n = c.gt as f64;
        let err = (c.fp + c.fn_ + c.ids) as f64;
        let smota = (1.0 - (err - (1.0 - r) * n) / (r * n)).clamp(0.0, 1.0);
        s += smota;
        a += 1.0 - err / n;
        p += if c.tp == 0 {
            0.0
        } else {
            c.iou_sum / c.tp as f64
        };
    }
    (s / 40.0, a / 40.0, p / 40.0)
}

/// Exact IoU of two yaw-free boxes.
pub fn aabb_iou(a: &Box3D, b: &Box3D) -> f64 {
    let overlap = |c1: f64, s1: f64, c2: f64, s2: f64| {
        ((c1 + s1 / 2.0).min(c2 + s2 / 2.0) - (c1 - s1 / 2.0).max(c2 - s2 / 2.0)).max(0.0)
    };
    let inter =
        overlap(a.x, a.l, b.x, b.l) * overlap(a.y, a.w, b.y, b.w) * overlap(a.z, a.h, b.z, b.h);
    inter / (a.w * a.l * a.h + b.w * b.l * b.h - inter)
}
