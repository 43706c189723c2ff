//! KITTI tracking text layouts.
//!
//! Detections (no track id), 17 whitespace-separated fields:
//! `frame type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y score`
//!
//! Labels and tracker results (with track id), 17 fields plus an optional
//! score: `frame id type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y [score]`
//!
//! Locations are KITTI camera coordinates of the bottom-center (y points
//! down). Internally boxes use a z-up frame with the geometric center:
//! `(x, y, z) = (x_cam, −z_cam, −y_cam + h/2)`, yaw = `rotation_y`. The map
//! is a reflection, so every volume and overlap is preserved.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Box3D;
use crate::io::{is_person_class, Detection3D, FrameInput};
use crate::lifecycle::EgoPose;

const DETECTION_FIELDS: usize = 17;
const LABEL_FIELDS: usize = 17;

/// A labelled or tracked box: ground truth or tracker output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: u32,
    pub id: u64,
    pub class_label: String,
    pub bbox: Box3D,
    /// Absent in ground-truth files.
    pub score: Option<f64>,
}

/// Parsed detections plus what the reader had to do to them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionFile {
    pub detections: Vec<Detection3D>,
    /// Lines whose class is not a person class.
    pub skipped_classes: usize,
    /// Scores fell outside `[0, 1]` and were min-max normalized.
    pub normalized_scores: bool,
}

fn box_from_kitti(h: f64, w: f64, l: f64, loc: [f64; 3], ry: f64) -> Result<Box3D> {
    Box3D::new(loc[0], -loc[2], -loc[1] + 0.5 * h, ry, w, l, h)
}

fn kitti_from_box(b: &Box3D) -> ([f64; 3], [f64; 3], f64) {
    // (h, w, l), (x, y, z) bottom-center camera coordinates, rotation_y
    ([b.h, b.w, b.l], [b.x, 0.5 * b.h - b.z, -b.y], b.yaw)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| parse_err(path, line, format!("field `{name}`: cannot parse `{s}`")))
}

fn finite(path: &Path, line: usize, name: &str, s: &str) -> Result<f64> {
    let v: f64 = num(path, line, name, s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(
            path,
            line,
            format!("field `{name}` is not finite"),
        ))
    }
}

fn parse_box(path: &Path, line: usize, f: &[&str]) -> Result<Box3D> {
    // f = [h, w, l, x, y, z, ry]
    let names = ["h", "w", "l", "x", "y", "z", "rotation_y"];
    let mut v = [0.0; 7];
    for (i, s) in f.iter().enumerate() {
        v[i] = finite(path, line, names[i], s)?;
    }
    box_from_kitti(v[0], v[1], v[2], [v[3], v[4], v[5]], v[6])
        .map_err(|e| parse_err(path, line, e.to_string()))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split_whitespace().collect()))
        }
    })
}

/// Parse detection text. `path` is only used for error locations.
pub fn parse_detections(text: &str, path: &Path) -> Result<DetectionFile> {
    let mut out = DetectionFile::default();
    for (line, f) in content_lines(text) {
        if f.len() != DETECTION_FIELDS {
            return Err(parse_err(
                path,
                line,
                format!("expected {DETECTION_FIELDS} fields, found {}", f.len()),
            ));
        }
        let frame: u32 = num(path, line, "frame", f[0])?;
        if !is_person_class(f[1]) {
            out.skipped_classes += 1;
            continue;
        }
        let bbox = parse_box(path, line, &f[9..16])?;
        let confidence = finite(path, line, "score", f[16])?;
        out.detections.push(Detection3D {
            frame,
            bbox,
            confidence,
            feature: None,
            class_label: f[1].to_string(),
        });
    }
    let out_of_range = out
        .detections
        .iter()
        .any(|d| !(0.0..=1.0).contains(&d.confidence));
    if out_of_range {
        let lo = out
            .detections
            .iter()
            .map(|d| d.confidence)
            .fold(f64::INFINITY, f64::min);
        let hi = out
            .detections
            .iter()
            .map(|d| d.confidence)
            .fold(f64::NEG_INFINITY, f64::max);
        for d in &mut out.detections {
            d.confidence = if hi > lo {
                (d.confidence - lo) / (hi - lo)
            } else {
                1.0
            };
        }
        out.normalized_scores = true;
    }
    Ok(out)
}

/// Group detections into one [`FrameInput`] per frame from 0 through the
/// last frame seen (or `min_frames − 1`, if larger), so empty frames are
/// explicit. Timestamps are `frame / frame_rate`.
pub fn detections_to_frames(
    detections: Vec<Detection3D>,
    frame_rate: f64,
    min_frames: usize,
) -> Vec<FrameInput> {
    let n = detections
        .iter()
        .map(|d| d.frame as usize + 1)
        .max()
        .unwrap_or(0)
        .max(min_frames);
    let mut frames: Vec<FrameInput> = (0..n)
        .map(|i| FrameInput {
            frame: i as u32,
            timestamp: i as f64 / frame_rate,
            detections: Vec::new(),
            ego: EgoPose::ORIGIN,
        })
        .collect();
    for d in detections {
        frames[d.frame as usize].detections.push(d);
    }
    frames
}

pub fn read_kitti_detections(path: &Path) -> Result<DetectionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, path)
}

/// Parse labels or tracker results. Non-person classes are skipped.
pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    for (line, f) in content_lines(text) {
        if f.len() != LABEL_FIELDS && f.len() != LABEL_FIELDS + 1 {
            return Err(parse_err(
                path,
                line,
                format!(
                    "expected {LABEL_FIELDS} or {} fields, found {}",
                    LABEL_FIELDS + 1,
                    f.len()
                ),
            ));
        }
        let frame: u32 = num(path, line, "frame", f[0])?;
        let id_raw: i64 = num(path, line, "id", f[1])?;
        if !is_person_class(f[2]) {
            continue;
        }
        let id = u64::try_from(id_raw)
            .map_err(|_| parse_err(path, line, format!("negative track id {id_raw}")))?;
        let bbox = parse_box(path, line, &f[10..17])?;
        let score = match f.get(17) {
            Some(s) => Some(finite(path, line, "score", s)?),
            None => None,
        };
        out.push(TrackRecord {
            frame,
            id,
            class_label: f[2].to_string(),
            bbox,
            score,
        });
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<TrackRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

/// Tracker results share the label layout.
pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    read_labels(path)
}

/// Six decimals, without the `-0.000000` that tiny negatives round to.
struct Fixed(f64);

impl std::fmt::Display for Fixed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = if self.0.abs() < 5e-7 { 0.0 } else { self.0 };
        write!(f, "{v:.6}")
    }
}

fn push_geometry(s: &mut String, b: &Box3D) {
    let ([h, w, l], [x, y, z], ry) = kitti_from_box(b);
    let [h, w, l, x, y, z, ry] = [h, w, l, x, y, z, ry].map(Fixed);
    // alpha and the 2D box are not tracked; written as placeholders.
    let _ = write!(s, " 0 0 -10 -1 -1 -1 -1 {h} {w} {l} {x} {y} {z} {ry}");
}

/// One result line.
pub fn format_track_line(r: &TrackRecord) -> String {
    let mut s = format!("{} {} {}", r.frame, r.id, r.class_label);
    push_geometry(&mut s, &r.bbox);
    if let Some(score) = r.score {
        let _ = write!(s, " {}", Fixed(score));
    }
    s
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Write tracker results ordered by (frame, id).
pub fn write_tracks(path: &Path, records: &[TrackRecord]) -> Result<()> {
    write_labels(path, records)
}

/// Write labels ordered by (frame, id).
pub fn write_labels(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut sorted: Vec<&TrackRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut body = String::new();
    for r in sorted {
        body.push_str(&format_track_line(r));
        body.push('\n');
    }
    write_file(path, &body)
}

/// Write detections in file order.
pub fn write_detections(path: &Path, detections: &[Detection3D]) -> Result<()> {
    let mut body = String::new();
    for d in detections {
        let _ = write!(body, "{} {}", d.frame, d.class_label);
        push_geometry(&mut body, &d.bbox);
        let _ = writeln!(body, " {}", Fixed(d.confidence));
    }
    write_file(path, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.txt")
    }

    #[test]
    fn parses_reference_line() {
        let line = "0 Pedestrian 0 0 0 0 0 0 0 1.89 0.48 1.20 1.84 1.47 8.41 0.01 0.9";
        let f = parse_detections(line, p()).unwrap();
        assert_eq!(f.detections.len(), 1);
        let d = &f.detections[0];
        assert_eq!(d.frame, 0);
        assert_eq!((d.bbox.h, d.bbox.w, d.bbox.l), (1.89, 0.48, 1.20));
        assert_eq!(d.bbox.x, 1.84);
        assert_eq!(d.bbox.y, -8.41);
        assert!((d.bbox.z - (-1.47 + 1.89 / 2.0)).abs() < 1e-12);
        assert_eq!(d.bbox.yaw, 0.01);
        assert_eq!(d.confidence, 0.9);
        assert!(!f.normalized_scores);
    }

    #[test]
    fn empty_file_is_empty() {
        let f = parse_detections("", p()).unwrap();
        assert!(f.detections.is_empty());
        assert!(detections_to_frames(f.detections, 10.0, 0).is_empty());
        assert!(parse_labels("\n\n", p()).unwrap().is_empty());
    }

    #[test]
    fn malformed_field_names_line() {
        let text = "0 Pedestrian 0 0 0 0 0 0 0 1.89 0.48 1.20 1.84 1.47 8.41 0.01 0.9\n\
                    1 Pedestrian 0 0 0 0 0 0 0 1.89 abc 1.20 1.84 1.47 8.41 0.01 0.9\n";
        match parse_detections(text, p()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains('w'), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count() {
        assert!(matches!(
            parse_detections("0 Pedestrian 1 2 3", p()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn non_person_classes_skipped_and_counted() {
        let text = "0 Car 0 0 0 0 0 0 0 1.5 1.6 3.9 1.0 1.6 10.0 0.0 0.9\n\
                    0 Pedestrian 0 0 0 0 0 0 0 1.89 0.48 1.20 1.84 1.47 8.41 0.01 0.9\n\
                    0 DontCare 0 0 0 0 0 0 0 1 1 1 0 0 0 0 0.1\n";
        let f = parse_detections(text, p()).unwrap();
        assert_eq!(f.detections.len(), 1);
        assert_eq!(f.skipped_classes, 2);
    }

    #[test]
    fn out_of_range_scores_min_max_normalized() {
        let text = "0 Pedestrian 0 0 0 0 0 0 0 1.8 0.6 0.6 0 1.5 5 0 -2.0\n\
                    0 Pedestrian 0 0 0 0 0 0 0 1.8 0.6 0.6 2 1.5 5 0 2.0\n\
                    1 Pedestrian 0 0 0 0 0 0 0 1.8 0.6 0.6 2 1.5 5 0 0.0\n";
        let f = parse_detections(text, p()).unwrap();
        assert!(f.normalized_scores);
        let c: Vec<f64> = f.detections.iter().map(|d| d.confidence).collect();
        assert_eq!(c, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn frames_fill_gaps() {
        let text = "2 Pedestrian 0 0 0 0 0 0 0 1.8 0.6 0.6 0 1.5 5 0 0.8\n";
        let f = parse_detections(text, p()).unwrap();
        let frames = detections_to_frames(f.detections, 5.0, 0);
        assert_eq!(frames.len(), 3);
        assert!(frames[0].detections.is_empty());
        assert_eq!(frames[2].detections.len(), 1);
        assert!((frames[2].timestamp - 0.4).abs() < 1e-12);
    }

    #[test]
    fn label_line_with_and_without_score() {
        let text = "3 7 Pedestrian 0 0 -10 -1 -1 -1 -1 1.8 0.6 0.7 1.0 1.5 9.0 0.3\n\
                    3 8 Pedestrian 0 0 -10 -1 -1 -1 -1 1.8 0.6 0.7 1.0 1.5 9.0 0.3 0.75\n";
        let r = parse_labels(text, p()).unwrap();
        assert_eq!(r[0].id, 7);
        assert_eq!(r[0].score, None);
        assert_eq!(r[1].score, Some(0.75));
        assert!(parse_labels(
            "3 -1 Pedestrian 0 0 -10 -1 -1 -1 -1 1.8 0.6 0.7 1.0 1.5 9.0 0.3",
            p()
        )
        .is_err());
    }

    #[test]
    fn empty_output_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_tracks(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn single_track_golden_line() {
        let r = TrackRecord {
            frame: 4,
            id: 2,
            class_label: "Pedestrian".into(),
            bbox: Box3D::new(1.84, -8.41, -1.47 + 0.945, 0.01, 0.48, 1.2, 1.89).unwrap(),
            score: Some(0.9),
        };
        assert_eq!(
            format_track_line(&r),
            "4 2 Pedestrian 0 0 -10 -1 -1 -1 -1 1.890000 0.480000 1.200000 1.840000 1.470000 8.410000 0.010000 0.900000"
        );
    }
}
