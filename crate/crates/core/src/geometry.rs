//! Gravity-aligned 3D boxes and the overlap scores built on them.
//!
//! Boxes rotate about +Z only. The bird's-eye-view (BEV) footprint is a
//! rectangle with `l` along the heading and `w` across it; overlaps are the
//! footprint intersection area times the vertical interval overlap.
//!
//! Three scores are provided:
//! - [`iou3d`]: intersection volume over union volume.
//! - [`giou3d`]: IoU minus the empty fraction of the enclosing volume, where
//!   the enclosure is the convex hull of both footprints extruded over the
//!   union of both vertical extents.
//! - [`mciou`]: GIoU plus a height-to-footprint aspect correction
//!   (`v = 4/π·(atan(h_s/A_s) − atan(h_t/A_t))`, `α = v·(v/(1−GIoU) + 1)`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Footprint areas below this are treated as empty.
pub const AREA_EPS: f64 = 1e-9;

/// Floor for `1 − GIoU` in the MCIoU correction.
pub const MCIOU_DENOM_FLOOR: f64 = 1e-9;

pub type Point2 = [f64; 2];

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    /// Geometric center, meters.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Rotation about +Z, radians, in `(-π, π]`.
    pub yaw: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
}

impl Box3D {
    /// Builds a box, normalizing the yaw and rejecting non-positive or
    /// non-finite dimensions.
    pub fn new(x: f64, y: f64, z: f64, yaw: f64, w: f64, l: f64, h: f64) -> Result<Self> {
        let vals = [x, y, z, yaw, w, l, h];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite field in {vals:?}")));
        }
        if w <= 0.0 || l <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "dimensions must be positive (w={w}, l={l}, h={h})"
            )));
        }
        Ok(Self {
            x,
            y,
            z,
            yaw: normalize_angle(yaw),
            w,
            l,
            h,
        })
    }

    pub fn footprint_area(&self) -> f64 {
        self.w * self.l
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    pub fn z_min(&self) -> f64 {
        self.z - 0.5 * self.h
    }

    pub fn z_max(&self) -> f64 {
        self.z + 0.5 * self.h
    }

    pub fn center(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Footprint corners, counter-clockwise, starting at the rear-right corner.
pub fn bev_polygon(b: &Box3D) -> [Point2; 4] {
    let (s, c) = b.yaw.sin_cos();
    let hl = 0.5 * b.l;
    let hw = 0.5 * b.w;
    let local = [[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]];
    local.map(|[u, v]| [b.x + c * u - s * v, b.y + s * u + c * v])
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    signed_area(poly).abs()
}

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    // Intersection of segment p→q with the infinite line a→b.
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let t = d1 / (d1 - d2);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection of two convex counter-clockwise polygons
/// (Sutherland–Hodgman, clipping `subject` by each edge of `clip`).
pub fn convex_intersection(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output: Vec<Point2> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, collinear
/// points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn z_overlap(a: &Box3D, b: &Box3D) -> f64 {
    (a.z_max().min(b.z_max()) - a.z_min().max(b.z_min())).max(0.0)
}

fn intersection_volume(a: &Box3D, b: &Box3D) -> f64 {
    let dz = z_overlap(a, b);
    if dz <= 0.0 {
        return 0.0;
    }
    let area = polygon_area(&convex_intersection(&bev_polygon(a), &bev_polygon(b)));
    if area < AREA_EPS {
        0.0
    } else {
        area * dz
    }
}

/// All three scores for one (source, target) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapScores {
    pub iou3d: f64,
    pub giou3d: f64,
    pub mciou: f64,
}

pub fn overlap_scores(a: &Box3D, b: &Box3D) -> OverlapScores {
    if a == b {
        return OverlapScores {
            iou3d: 1.0,
            giou3d: 1.0,
            mciou: 1.0,
        };
    }
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    let iou = (inter / union).clamp(0.0, 1.0);

    let mut corners = [[0.0; 2]; 8];
    corners[..4].copy_from_slice(&bev_polygon(a));
    corners[4..].copy_from_slice(&bev_polygon(b));
    let hull_area = polygon_area(&convex_hull(&corners));
    let span = a.z_max().max(b.z_max()) - a.z_min().min(b.z_min());
    let enclosure = hull_area * span;
    let giou = if enclosure > union {
        iou - (enclosure - union) / enclosure
    } else {
        iou
    };
    OverlapScores {
        iou3d: iou,
        giou3d: giou,
        mciou: mciou_from_giou(a, b, giou),
    }
}

pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn giou3d(a: &Box3D, b: &Box3D) -> f64 {
    overlap_scores(a, b).giou3d
}

/// Height-to-footprint aspect gap `v` between source `a` and target `b`.
pub fn aspect_gap(a: &Box3D, b: &Box3D) -> f64 {
    4.0 / PI * ((a.h / a.footprint_area()).atan() - (b.h / b.footprint_area()).atan())
}

/// MCIoU given a precomputed GIoU. Not symmetric: `a` is the source
/// (track) box and `b` the target (detection) box.
pub fn mciou_from_giou(a: &Box3D, b: &Box3D, giou: f64) -> f64 {
    let v = aspect_gap(a, b);
    if v == 0.0 {
        return giou;
    }
    let denom = (1.0 - giou).max(MCIOU_DENOM_FLOOR);
    giou + v * (v / denom + 1.0)
}

pub fn mciou(a: &Box3D, b: &Box3D) -> f64 {
    overlap_scores(a, b).mciou
}
