//! Appearance-feature sidecar, CSV.
//!
//! ```text
//! dim,D
//! frame,det_index,v0,...,v{D-1}
//! ```
//!
//! `det_index` is the position of the detection within its frame, in
//! detection-file order. Values are written with round-trip precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::assoc::FeatureVec;
use crate::error::{Error, Result};
use crate::io::FrameInput;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSidecar {
    pub dim: usize,
    pub features: BTreeMap<u32, BTreeMap<usize, FeatureVec>>,
}

impl FeatureSidecar {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, frame: u32, det_index: usize, f: FeatureVec) -> Result<()> {
        if f.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: f.len(),
            });
        }
        self.features.entry(frame).or_default().insert(det_index, f);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_feature_sidecar(text: &str, path: &Path) -> Result<FeatureSidecar> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing `dim,D` header".into()))?;
    let dim = header
        .strip_prefix("dim,")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| err(hline, format!("bad header `{header}`")))?;
    let mut out = FeatureSidecar::new(dim);
    for (line, l) in lines {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() < 2 {
            return Err(err(line, "expected frame,det_index,values".into()));
        }
        if f.len() - 2 != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len() - 2,
            });
        }
        let frame: u32 = f[0]
            .parse()
            .map_err(|_| err(line, format!("field `frame`: cannot parse `{}`", f[0])))?;
        let det: usize = f[1]
            .parse()
            .map_err(|_| err(line, format!("field `det_index`: cannot parse `{}`", f[1])))?;
        let mut values = Vec::with_capacity(dim);
        for (k, s) in f[2..].iter().enumerate() {
            let v: f64 = s
                .parse()
                .map_err(|_| err(line, format!("value {k}: cannot parse `{s}`")))?;
            values.push(v);
        }
        let fv = FeatureVec::new(values).map_err(|e| err(line, e.to_string()))?;
        out.insert(frame, det, fv)?;
    }
    Ok(out)
}

pub fn read_feature_sidecar(path: &Path) -> Result<FeatureSidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_sidecar(&text, path)
}

pub fn write_feature_sidecar(path: &Path, sidecar: &FeatureSidecar) -> Result<()> {
    let mut s = format!("dim,{}\n", sidecar.dim);
    for (frame, row) in &sidecar.features {
        for (det, f) in row {
            let _ = write!(s, "{frame},{det}");
            for v in f.values() {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Attach sidecar vectors to detections. Every sidecar row must name an
/// existing detection; detections without a row keep `feature = None`.
pub fn attach_features(frames: &mut [FrameInput], sidecar: &FeatureSidecar) -> Result<()> {
    for (&frame, row) in &sidecar.features {
        let mut target = frames.iter_mut().find(|f| f.frame == frame);
        for (&det, fv) in row {
            let d = target
                .as_deref_mut()
                .and_then(|f| f.detections.get_mut(det))
                .ok_or(Error::MissingDetection { frame, index: det })?;
            d.feature = Some(fv.clone());
        }
    }
    Ok(())
}
