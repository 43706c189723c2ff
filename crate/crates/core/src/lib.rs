//! Tracking-by-detection for people in LiDAR point clouds.
//!
//! Per frame, tracklets are predicted with a Kalman-family filter
//! ([`filter`]), associated with detections by a height-aware 3D overlap
//! score blended with appearance similarity ([`assoc`]), and then updated,
//! born, demoted or deleted ([`lifecycle`]). [`metrics`] evaluates results
//! against ground truth, [`simgen`] synthesizes scenarios, and [`pipeline`]
//! ties both to the tracker for whole-sequence runs and ablation sweeps.

pub mod assoc;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod lifecycle;
pub mod metrics;
pub mod pipeline;
pub mod simgen;

pub use assoc::{AssocConfig, AssocMetric, AssocResult, FeatureVec};
pub use error::{Error, Result};
pub use filter::{FilterConfig, FilterState, FilterVariant, NoiseParams, RFloor, TrackState};
pub use geometry::Box3D;
pub use io::{Config, Detection3D, FrameInput, RunOptions, TrackRecord};
pub use lifecycle::{
    EgoPose, LifecycleConfig, StageTimings, TrackOutput, TrackStatus, Tracker, TrackerConfig,
    Tracklet,
};
pub use metrics::{EvalReport, EvalRow, MotCounts};
pub use simgen::{Scenario, ScenarioSpec};
