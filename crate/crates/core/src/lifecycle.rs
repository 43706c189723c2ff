//! Tracklet pool and the per-frame state machine.
//!
//! Every frame: predict all tracklets, associate them against every
//! detection, update matched tracklets (filter + low-pass score), decay and
//! possibly delete unmatched ones, and birth candidates from confident
//! unmatched detections. Only `Active` tracklets are reported.
//!
//! `Lost` tracklets stay in the pool and keep coasting on the motion model,
//! so a person who disappears behind an occluder can be re-associated under
//! the same id when they reappear.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assoc::{
    two_stage_associate, AssocConfig, DetectionCandidate, FeatureVec, TrackCandidate,
};
use crate::error::{Error, Result};
use crate::filter::{self, measurement_of, FilterConfig, FilterState};
use crate::geometry::Box3D;
use crate::io::FrameInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Candidate,
    Active,
    Lost,
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: u64,
    pub filter: FilterState,
    pub status: TrackStatus,
    /// Smoothed confidence in `[0, 1]`.
    pub score: f64,
    pub feature: Option<FeatureVec>,
    /// Consecutive frames matched.
    pub hits: u32,
    /// Frames since birth.
    pub age: u32,
    /// Frames since the last match.
    pub frames_lost: u32,
    pub last_box: Box3D,
    /// Has been `Active` at least once.
    pub confirmed: bool,
}

impl Tracklet {
    pub fn predicted_box(&self) -> Box3D {
        self.filter.mean.to_box()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifecycleConfig {
    /// Score separating active from candidate tracklets; also the birth
    /// threshold for unmatched detections.
    pub f1_threshold: f64,
    pub death_threshold: f64,
    /// Low-pass weight on the track score, in `(0, 1)`.
    pub omega_lpf: f64,
    /// Normalizing range of the distance decay, meters.
    pub max_range: f64,
    pub candidate_promote_hits: u32,
    /// Lost tracklets are deleted once `frames_lost` exceeds this.
    pub max_lost_frames: u32,
    /// Covariance of lost tracklets stops growing after this many misses.
    pub freeze_cov_after: u32,
    /// Distance-based decay of unmatched tracklets.
    pub cdd_decay: bool,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        Self {
            f1_threshold: 0.5,
            death_threshold: 0.1,
            omega_lpf: 0.7,
            max_range: 80.0,
            candidate_promote_hits: 2,
            max_lost_frames: 60,
            freeze_cov_after: 10,
            cdd_decay: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EgoPose {
    pub const ORIGIN: EgoPose = EgoPose {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };
}

/// `ω·t_score + (1−ω)·d_score`.
pub fn lpf_score(t_score: f64, d_score: f64, omega: f64) -> f64 {
    (omega * t_score + (1.0 - omega) * d_score).clamp(0.0, 1.0)
}

/// Distance from the ego origin over `max_range`.
pub fn cdd(track_pos: [f64; 3], ego: &EgoPose, max_range: f64) -> f64 {
    let dx = track_pos[0] - ego.x;
    let dy = track_pos[1] - ego.y;
    let dz = track_pos[2] - ego.z;
    (dx * dx + dy * dy + dz * dz).sqrt() / max_range
}

/// Marks an unmatched tracklet lost and decays its score by distance.
pub fn decay_lost(mut t: Tracklet, ego: &EgoPose, cfg: &LifecycleConfig) -> Tracklet {
    if cfg.cdd_decay {
        let d = cdd(t.filter.mean.position(), ego, cfg.max_range).min(1.0);
        t.score = (t.score * (1.0 - d)).clamp(0.0, 1.0);
    }
    t.frames_lost += 1;
    t.hits = 0;
    t.status = TrackStatus::Lost;
    t
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackerConfig {
    pub filter: FilterConfig,
    pub assoc: AssocConfig,
    pub lifecycle: LifecycleConfig,
}

/// One reported track in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: Box3D,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub predict: Duration,
    pub associate: Duration,
    pub lifecycle: Duration,
}

/// Owns the tracklet pool of one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    pool: Vec<Tracklet>,
    next_id: u64,
    last_timestamp: Option<f64>,
    timings: StageTimings,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            pool: Vec::new(),
            next_id: 1,
            last_timestamp: None,
            timings: StageTimings::default(),
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &[Tracklet] {
        &self.pool
    }

    pub fn timings(&self) -> StageTimings {
        self.timings
    }

    /// Number of ids handed out so far.
    pub fn births(&self) -> u64 {
        self.next_id - 1
    }

    pub fn step_frame(&mut self, frame: &FrameInput) -> Result<Vec<TrackOutput>> {
        let dt = match self.last_timestamp {
            Some(last) if frame.timestamp <= last => {
                return Err(Error::OutOfOrderFrame {
                    last,
                    got: frame.timestamp,
                })
            }
            Some(last) => frame.timestamp - last,
            None => 0.0,
        };
        self.last_timestamp = Some(frame.timestamp);
        let lc = self.cfg.lifecycle;

        let t0 = Instant::now();
        if dt > 0.0 {
            let fcfg = self.cfg.filter.with_dt(dt);
            for t in &mut self.pool {
                let prev_p = t.filter.p;
                t.filter = filter::predict(&t.filter, &fcfg)?;
                if t.frames_lost >= lc.freeze_cov_after {
                    t.filter.p = prev_p;
                }
                t.age += 1;
            }
        }
        let t1 = Instant::now();

        let track_views: Vec<TrackCandidate<'_>> = self
            .pool
            .iter()
            .map(|t| TrackCandidate {
                bbox: t.predicted_box(),
                feature: t.feature.as_ref(),
            })
            .collect();
        let det_views: Vec<DetectionCandidate<'_>> = frame
            .detections
            .iter()
            .map(|d| DetectionCandidate {
                bbox: d.bbox,
                confidence: d.confidence,
                feature: d.feature.as_ref(),
            })
            .collect();
        let result = two_stage_associate(&track_views, &det_views, &self.cfg.assoc);
        drop(track_views);
        let t2 = Instant::now();

        let mut matched = vec![false; self.pool.len()];
        for &(ti, di) in &result.matches {
            matched[ti] = true;
            let det = &frame.detections[di];
            let t = &mut self.pool[ti];
            t.filter = filter::update(
                &t.filter,
                &measurement_of(&det.bbox),
                det.confidence,
                &self.cfg.filter,
            )?;
            t.score = lpf_score(t.score, det.confidence.clamp(0.0, 1.0), lc.omega_lpf);
            t.hits += 1;
            t.frames_lost = 0;
            t.last_box = t.filter.mean.to_box();
            if let Some(df) = &det.feature {
                t.feature = Some(match &t.feature {
                    Some(tf) => tf.blend(df, self.cfg.assoc.feature_decay)?,
                    None => df.clone(),
                });
            }
            let eligible = t.confirmed || t.hits >= lc.candidate_promote_hits;
            t.status = if t.score >= lc.f1_threshold && eligible {
                t.confirmed = true;
                TrackStatus::Active
            } else {
                TrackStatus::Candidate
            };
        }

        let pool = std::mem::take(&mut self.pool);
        self.pool = pool
            .into_iter()
            .zip(matched)
            .filter_map(|(t, was_matched)| {
                if was_matched {
                    return Some(t);
                }
                let t = decay_lost(t, &frame.ego, &lc);
                let dead = t.score < lc.death_threshold || t.frames_lost > lc.max_lost_frames;
                (!dead).then_some(t)
            })
            .collect();

        for &di in &result.unmatched_detections {
            let det = &frame.detections[di];
            if det.confidence < lc.f1_threshold {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.pool.push(Tracklet {
                id,
                filter: FilterState::from_detection(&det.bbox, &self.cfg.filter),
                status: TrackStatus::Candidate,
                score: det.confidence.clamp(0.0, 1.0),
                feature: det.feature.clone(),
                hits: 1,
                age: 0,
                frames_lost: 0,
                last_box: det.bbox,
                confirmed: false,
            });
        }

        for t in &mut self.pool {
            if t.status == TrackStatus::Candidate
                && t.hits >= lc.candidate_promote_hits
                && t.score >= lc.f1_threshold
            {
                t.status = TrackStatus::Active;
                t.confirmed = true;
            }
        }

        let mut out: Vec<TrackOutput> = self
            .pool
            .iter()
            .filter(|t| t.status == TrackStatus::Active)
            .map(|t| TrackOutput {
                id: t.id,
                bbox: t.last_box,
                score: t.score,
            })
            .collect();
        out.sort_by_key(|o| o.id);
        let t3 = Instant::now();

        self.timings.predict += t1 - t0;
        self.timings.associate += t2 - t1;
        self.timings.lifecycle += t3 - t2;
        Ok(out)
    }
}

/// A detection confidence with its true/false-positive label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledDetection {
    pub confidence: f64,
    pub true_positive: bool,
}

/// Confidence threshold in `{0.00, 0.01, …, 1.00}` maximizing F1 over the
/// labeled set (detections at or above the threshold are kept). Ties go to
/// the lowest threshold.
pub fn compute_f1_threshold(labeled: &[LabeledDetection]) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("labeled detections"));
    }
    let positives = labeled.iter().filter(|d| d.true_positive).count();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=100u32 {
        let thr = f64::from(k) / 100.0;
        let (mut tp, mut fp) = (0usize, 0usize);
        for d in labeled.iter().filter(|d| d.confidence >= thr) {
            if d.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let fn_ = positives - tp;
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        if f1 > best.0 {
            best = (f1, thr);
        }
    }
    Ok(best.1)
}
