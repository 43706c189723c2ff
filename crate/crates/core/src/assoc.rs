//! Track-to-detection association.
//!
//! Pair scores combine MCIoU with exponentiated cosine feature similarity
//! (`ω·MCIoU + (1−ω)·FS`). Assignment is solved optimally per stage: first
//! detections at or above `high_conf_split`, then everything left over.
//! Pairs whose geometric score falls below the gate but whose features
//! agree strongly (`FS ≥ fs_gate`) are then matched greedily, which is what
//! lets a track that coasted far from its reappearance point keep its id.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{overlap_scores, Box3D};

/// A non-zero, finite embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVec {
    values: Vec<f64>,
    norm: f64,
}

impl FeatureVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidFeature("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature("non-finite entry".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(Error::InvalidFeature("zero vector".into()));
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn cosine(&self, other: &FeatureVec) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok((dot / (self.norm * other.norm)).clamp(-1.0, 1.0))
    }

    /// Exponential moving average of unit-normalized vectors:
    /// `decay·self + (1−decay)·other`. Falls back to `other` if the blend
    /// cancels out.
    pub fn blend(&self, other: &FeatureVec, decay: f64) -> Result<FeatureVec> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let mixed: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| decay * a / self.norm + (1.0 - decay) * b / other.norm)
            .collect();
        Ok(FeatureVec::new(mixed).unwrap_or_else(|_| other.clone()))
    }
}

/// `exp(cos(f_s, f_t))`, in `[e⁻¹, e]`.
pub fn feature_similarity(f_s: &FeatureVec, f_t: &FeatureVec) -> Result<f64> {
    Ok(f_s.cosine(f_t)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AssocMetric {
    /// 3D GIoU only.
    #[serde(rename = "giou")]
    Giou,
    /// MCIoU only; features ignored.
    #[serde(rename = "mciou")]
    Mciou,
    /// MCIoU blended with feature similarity, plus feature rescue.
    #[default]
    #[serde(rename = "mciou_fs")]
    MciouFs,
}

impl AssocMetric {
    pub fn name(self) -> &'static str {
        match self {
            AssocMetric::Giou => "giou",
            AssocMetric::Mciou => "mciou",
            AssocMetric::MciouFs => "mciou_fs",
        }
    }
}

impl std::str::FromStr for AssocMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "giou" => Ok(AssocMetric::Giou),
            "mciou" => Ok(AssocMetric::Mciou),
            "mciou_fs" | "mcioufs" => Ok(AssocMetric::MciouFs),
            _ => Err(format!(
                "unknown association metric `{s}` (giou, mciou, mciou_fs)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssocConfig {
    /// Weight of the geometric term, in `(0, 1)`.
    pub omega: f64,
    /// Minimum geometric score (MCIoU, or GIoU for [`AssocMetric::Giou`]).
    pub mciou_gate: f64,
    /// Minimum feature similarity for a rescue match.
    pub fs_gate: f64,
    /// Detections at or above this confidence are matched first.
    pub high_conf_split: f64,
    pub metric: AssocMetric,
    /// EMA decay of the per-track feature memory.
    pub feature_decay: f64,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            omega: 0.5,
            mciou_gate: 0.1,
            fs_gate: 0.7f64.exp(),
            high_conf_split: 0.5,
            metric: AssocMetric::MciouFs,
            feature_decay: 0.9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssocResult {
    /// `(track index, detection index)`, sorted by track index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Geometric score used for gating under `metric`.
fn geometric_score(track_box: &Box3D, det_box: &Box3D, metric: AssocMetric) -> f64 {
    let s = overlap_scores(track_box, det_box);
    match metric {
        AssocMetric::Giou => s.giou3d,
        AssocMetric::Mciou | AssocMetric::MciouFs => s.mciou,
    }
}

fn combine(geom: f64, fs: Option<f64>, cfg: &AssocConfig) -> f64 {
    match (cfg.metric, fs) {
        (AssocMetric::MciouFs, Some(fs)) => cfg.omega * geom + (1.0 - cfg.omega) * fs,
        _ => geom,
    }
}

fn pair_fs(a: Option<&FeatureVec>, b: Option<&FeatureVec>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => feature_similarity(a, b).ok(),
        _ => None,
    }
}

/// Association score for one (track, detection) pair. Without both
/// features the score is the geometric term alone.
pub fn pair_score(
    track_box: &Box3D,
    det_box: &Box3D,
    track_feat: Option<&FeatureVec>,
    det_feat: Option<&FeatureVec>,
    cfg: &AssocConfig,
) -> f64 {
    let geom = geometric_score(track_box, det_box, cfg.metric);
    let fs = match cfg.metric {
        AssocMetric::MciouFs => pair_fs(track_feat, det_feat),
        _ => None,
    };
    combine(geom, fs, cfg)
}

/// Minimum-cost assignment on a rows ≤ cols matrix (shortest augmenting
/// path with potentials). Returns the column assigned to each row.
fn hungarian_min(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let m = cost.ncols();
    debug_assert!(n <= m);
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Maximum-total-score one-to-one assignment; matched pairs scoring below
/// `gate` are demoted to unmatched.
pub fn solve_assignment(scores: &DMatrix<f64>, gate: f64) -> AssocResult {
    let (t, d) = scores.shape();
    let mut matches = Vec::new();
    if t > 0 && d > 0 {
        if t <= d {
            let assign = hungarian_min(&(-scores));
            for (row, &col) in assign.iter().enumerate() {
                matches.push((row, col));
            }
        } else {
            let assign = hungarian_min(&(-scores.transpose()));
            for (col, &row) in assign.iter().enumerate() {
                matches.push((row, col));
            }
        }
    }
    matches.retain(|&(r, c)| scores[(r, c)] >= gate);
    matches.sort_unstable();
    let mut track_used = vec![false; t];
    let mut det_used = vec![false; d];
    for &(r, c) in &matches {
        track_used[r] = true;
        det_used[c] = true;
    }
    AssocResult {
        matches,
        unmatched_tracks: (0..t).filter(|&i| !track_used[i]).collect(),
        unmatched_detections: (0..d).filter(|&j| !det_used[j]).collect(),
    }
}

/// Sum of matched scores, accumulated in track order.
pub fn assignment_total(scores: &DMatrix<f64>, result: &AssocResult) -> f64 {
    result.matches.iter().map(|&(r, c)| scores[(r, c)]).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct TrackCandidate<'a> {
    pub bbox: Box3D,
    pub feature: Option<&'a FeatureVec>,
}

#[derive(Debug, Clone, Copy)]
pub struct DetectionCandidate<'a> {
    pub bbox: Box3D,
    pub confidence: f64,
    pub feature: Option<&'a FeatureVec>,
}

/// Score assigned to gated-out pairs so the solver never prefers them.
const MASKED: f64 = -1e6;

fn solve_subset(
    geom: &DMatrix<f64>,
    score: &DMatrix<f64>,
    rows: &[usize],
    cols: &[usize],
    gate: f64,
) -> Vec<(usize, usize)> {
    if rows.is_empty() || cols.is_empty() {
        return Vec::new();
    }
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let (t, d) = (rows[i], cols[j]);
        if geom[(t, d)] >= gate {
            score[(t, d)]
        } else {
            MASKED
        }
    });
    solve_assignment(&sub, MASKED / 2.0)
        .matches
        .into_iter()
        .map(|(i, j)| (rows[i], cols[j]))
        .collect()
}

/// Two-stage association with feature rescue.
pub fn two_stage_associate(
    tracks: &[TrackCandidate<'_>],
    detections: &[DetectionCandidate<'_>],
    cfg: &AssocConfig,
) -> AssocResult {
    let (nt, nd) = (tracks.len(), detections.len());
    let use_fs = cfg.metric == AssocMetric::MciouFs;
    let mut geom = DMatrix::zeros(nt, nd);
    let mut fs = DMatrix::from_element(nt, nd, f64::NAN);
    let mut score = DMatrix::zeros(nt, nd);
    for (t, tr) in tracks.iter().enumerate() {
        for (d, det) in detections.iter().enumerate() {
            let g = geometric_score(&tr.bbox, &det.bbox, cfg.metric);
            let f = if use_fs {
                pair_fs(tr.feature, det.feature)
            } else {
                None
            };
            geom[(t, d)] = g;
            if let Some(f) = f {
                fs[(t, d)] = f;
            }
            score[(t, d)] = combine(g, f, cfg);
        }
    }

    let mut track_used = vec![false; nt];
    let mut det_used = vec![false; nd];
    let mut matches = Vec::new();

    let all_tracks: Vec<usize> = (0..nt).collect();
    let high: Vec<usize> = (0..nd)
        .filter(|&d| detections[d].confidence >= cfg.high_conf_split)
        .collect();
    for (t, d) in solve_subset(&geom, &score, &all_tracks, &high, cfg.mciou_gate) {
        track_used[t] = true;
        det_used[d] = true;
        matches.push((t, d));
    }

    let rest_tracks: Vec<usize> = (0..nt).filter(|&t| !track_used[t]).collect();
    let rest_dets: Vec<usize> = (0..nd).filter(|&d| !det_used[d]).collect();
    for (t, d) in solve_subset(&geom, &score, &rest_tracks, &rest_dets, cfg.mciou_gate) {
        track_used[t] = true;
        det_used[d] = true;
        matches.push((t, d));
    }

    if use_fs {
        let mut rescue: Vec<(f64, usize, usize)> = Vec::new();
        for t in (0..nt).filter(|&t| !track_used[t]) {
            for d in (0..nd).filter(|&d| !det_used[d]) {
                let f = fs[(t, d)];
                if geom[(t, d)] < cfg.mciou_gate && !f.is_nan() && f >= cfg.fs_gate {
                    rescue.push((f, t, d));
                }
            }
        }
        rescue.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, t, d) in rescue {
            if !track_used[t] && !det_used[d] {
                track_used[t] = true;
                det_used[d] = true;
                matches.push((t, d));
            }
        }
    }

    matches.sort_unstable();
    AssocResult {
        matches,
        unmatched_tracks: (0..nt).filter(|&t| !track_used[t]).collect(),
        unmatched_detections: (0..nd).filter(|&d| !det_used[d]).collect(),
    }
}
