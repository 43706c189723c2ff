//! File formats: KITTI-layout detections, labels and results, feature
//! sidecars, ego poses, and the run configuration.

mod config;
mod ego;
mod features;
mod kitti;

pub use config::{parse_config, read_config, Config, RunOptions, CONFIG_KEYS};
pub use ego::{parse_ego_poses, read_ego_poses, write_ego_poses, EgoPoses};
pub use features::{
    attach_features, parse_feature_sidecar, read_feature_sidecar, write_feature_sidecar,
    FeatureSidecar,
};
pub use kitti::{
    detections_to_frames, format_track_line, parse_detections, parse_labels, read_kitti_detections,
    read_labels, read_tracks, write_detections, write_labels, write_tracks, DetectionFile,
    TrackRecord,
};

use crate::assoc::FeatureVec;
use crate::geometry::Box3D;
use crate::lifecycle::EgoPose;

/// One detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection3D {
    pub frame: u32,
    pub bbox: Box3D,
    pub confidence: f64,
    pub feature: Option<FeatureVec>,
    pub class_label: String,
}

/// Everything the tracker consumes for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub frame: u32,
    /// Seconds.
    pub timestamp: f64,
    pub detections: Vec<Detection3D>,
    pub ego: EgoPose,
}

/// Classes the tracker processes; everything else is skipped on read.
pub fn is_person_class(label: &str) -> bool {
    label.eq_ignore_ascii_case("pedestrian") || label.eq_ignore_ascii_case("person")
}
