//! Ego poses: one `frame x y z` line per frame, in the tracking frame.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::FrameInput;
use crate::lifecycle::EgoPose;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EgoPoses(pub BTreeMap<u32, EgoPose>);

impl EgoPoses {
    /// Pose for `frame`, or the origin when the file has none.
    pub fn pose(&self, frame: u32) -> EgoPose {
        self.0.get(&frame).copied().unwrap_or(EgoPose::ORIGIN)
    }

    pub fn apply(&self, frames: &mut [FrameInput]) {
        for f in frames {
            f.ego = self.pose(f.frame);
        }
    }
}

pub fn parse_ego_poses(text: &str, path: &Path) -> Result<EgoPoses> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let frame: u32 = f[0]
            .parse()
            .map_err(|_| err(format!("field `frame`: cannot parse `{}`", f[0])))?;
        let mut xyz = [0.0; 3];
        for (k, name) in ["x", "y", "z"].iter().enumerate() {
            let v: f64 = f[k + 1]
                .parse()
                .map_err(|_| err(format!("field `{name}`: cannot parse `{}`", f[k + 1])))?;
            if !v.is_finite() {
                return Err(err(format!("field `{name}` is not finite")));
            }
            xyz[k] = v;
        }
        out.insert(
            frame,
            EgoPose {
                x: xyz[0],
                y: xyz[1],
                z: xyz[2],
            },
        );
    }
    Ok(EgoPoses(out))
}

pub fn read_ego_poses(path: &Path) -> Result<EgoPoses> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ego_poses(&text, path)
}

pub fn write_ego_poses(path: &Path, poses: &EgoPoses) -> Result<()> {
    let mut s = String::new();
    for (frame, p) in &poses.0 {
        let _ = writeln!(s, "{frame} {:?} {:?} {:?}", p.x, p.y, p.z);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
