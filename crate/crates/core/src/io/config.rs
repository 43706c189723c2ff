//! Flat `key = value` run configuration.
//!
//! The file is parsed as TOML without tables. Every key is optional; an
//! empty file yields [`Config::default`]. The authoritative list of keys,
//! defaults and ranges is `docs/config.reference`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::assoc::{AssocConfig, AssocMetric};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, FilterVariant, NoiseParams, RFloor};
use crate::lifecycle::{LifecycleConfig, TrackerConfig};

/// Options that do not belong to a tracker component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOptions {
    /// Sensor rate, Hz; sets the filter time step.
    pub frame_rate: f64,
    /// Detections below this confidence are dropped before tracking.
    pub prefilter_threshold: f64,
    /// 3D IoU needed for a true positive during evaluation.
    pub iou_thres: f64,
    /// Worker threads for multi-sequence runs; 0 picks the core count.
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            frame_rate: 10.0,
            prefilter_threshold: 0.0,
            iou_thres: 0.25,
            workers: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub variant: FilterVariant,
    pub kappa: f64,
    pub alpha_adapt: f64,
    pub r_floor: RFloor,
    pub noise: NoiseParams,
    pub assoc: AssocConfig,
    pub lifecycle: LifecycleConfig,
    pub run: RunOptions,
}

impl Default for Config {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            variant: f.variant,
            kappa: f.kappa,
            alpha_adapt: f.alpha_adapt,
            r_floor: f.r_floor,
            noise: NoiseParams::default(),
            assoc: AssocConfig::default(),
            lifecycle: LifecycleConfig::default(),
            run: RunOptions::default(),
        }
    }
}

/// Every accepted key, in reference-file order.
pub const CONFIG_KEYS: &[&str] = &[
    "variant",
    "kappa",
    "alpha_adapt",
    "r_floor",
    "r_pos",
    "r_yaw",
    "r_dim",
    "q_pos",
    "q_yaw",
    "q_vel",
    "q_acc",
    "q_dim",
    "p0_pos",
    "p0_yaw",
    "p0_vel",
    "p0_acc",
    "p0_dim",
    "omega_assoc",
    "mciou_gate",
    "fs_gate",
    "high_conf_split",
    "assoc_metric",
    "feature_decay",
    "f1_threshold",
    "death_threshold",
    "omega_lpf",
    "max_range",
    "candidate_promote_hits",
    "max_lost_frames",
    "freeze_cov_after",
    "cdd_decay",
    "frame_rate",
    "prefilter_threshold",
    "iou_thres",
    "workers",
    "seed",
];

struct Ctx<'a> {
    path: &'a Path,
    key: &'a str,
}

impl Ctx<'_> {
    fn type_err(&self, expected: &'static str) -> Error {
        Error::TypeError {
            path: self.path.to_path_buf(),
            key: self.key.to_string(),
            expected,
        }
    }

    fn range(&self, msg: impl Into<String>) -> Error {
        Error::RangeViolation {
            path: self.path.to_path_buf(),
            key: self.key.to_string(),
            msg: msg.into(),
        }
    }

    fn float(&self, v: &Value) -> Result<f64> {
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            _ => return Err(self.type_err("number")),
        };
        if x.is_finite() {
            Ok(x)
        } else {
            Err(self.range("must be finite"))
        }
    }

    fn uint(&self, v: &Value) -> Result<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::Integer(_) => Err(self.range("must be non-negative")),
            _ => Err(self.type_err("integer")),
        }
    }

    fn u32(&self, v: &Value) -> Result<u32> {
        u32::try_from(self.uint(v)?).map_err(|_| self.range("too large"))
    }

    fn string<'v>(&self, v: &'v Value) -> Result<&'v str> {
        v.as_str().ok_or_else(|| self.type_err("string"))
    }

    fn boolean(&self, v: &Value) -> Result<bool> {
        v.as_bool().ok_or_else(|| self.type_err("boolean"))
    }

    fn open_unit(&self, v: &Value) -> Result<f64> {
        let x = self.float(v)?;
        if x > 0.0 && x < 1.0 {
            Ok(x)
        } else {
            Err(self.range(format!("{x} is outside (0, 1)")))
        }
    }

    fn closed_unit(&self, v: &Value) -> Result<f64> {
        let x = self.float(v)?;
        if (0.0..=1.0).contains(&x) {
            Ok(x)
        } else {
            Err(self.range(format!("{x} is outside [0, 1]")))
        }
    }

    fn positive(&self, v: &Value) -> Result<f64> {
        let x = self.float(v)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(self.range(format!("{x} must be > 0")))
        }
    }

    fn non_negative(&self, v: &Value) -> Result<f64> {
        let x = self.float(v)?;
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(self.range(format!("{x} must be >= 0")))
        }
    }
}

impl Config {
    /// Apply every key of `table` on top of `self`.
    pub fn apply(&mut self, table: &Table, path: &Path) -> Result<()> {
        for (key, v) in table {
            self.apply_one(key, v, path)?;
        }
        Ok(())
    }

    /// Apply a `key=value` override. Bare words are taken as strings.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let origin = PathBuf::from("<override>");
        let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.clone(),
            line: 1,
            msg: format!("expected key=value, got `{assignment}`"),
        })?;
        let (key, raw) = (key.trim(), raw.trim());
        let doc = format!("v = {raw}");
        let value = match doc.parse::<Table>() {
            Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.to_string())),
            Err(_) => Value::String(raw.to_string()),
        };
        self.apply_one(key, &value, &origin)
    }

    fn apply_one(&mut self, key: &str, v: &Value, path: &Path) -> Result<()> {
        let c = Ctx { path, key };
        match key {
            "variant" => {
                self.variant = c
                    .string(v)?
                    .parse()
                    .map_err(|_| c.range("expected kf, ukf or dukf"))?
            }
            "kappa" => {
                let k = c.float(v)?;
                if k <= -(crate::filter::STATE_DIM as f64) {
                    return Err(c.range(format!("{k} makes L + kappa non-positive")));
                }
                self.kappa = k;
            }
            "alpha_adapt" => self.alpha_adapt = c.closed_unit(v)?,
            "r_floor" => {
                self.r_floor = c
                    .string(v)?
                    .parse()
                    .map_err(|_| c.range("expected spd or init"))?
            }
            "r_pos" => self.noise.r_pos = c.positive(v)?,
            "r_yaw" => self.noise.r_yaw = c.positive(v)?,
            "r_dim" => self.noise.r_dim = c.positive(v)?,
            "q_pos" => self.noise.q_pos = c.non_negative(v)?,
            "q_yaw" => self.noise.q_yaw = c.non_negative(v)?,
            "q_vel" => self.noise.q_vel = c.non_negative(v)?,
            "q_acc" => self.noise.q_acc = c.non_negative(v)?,
            "q_dim" => self.noise.q_dim = c.non_negative(v)?,
            "p0_pos" => self.noise.p0_pos = c.non_negative(v)?,
            "p0_yaw" => self.noise.p0_yaw = c.non_negative(v)?,
            "p0_vel" => self.noise.p0_vel = c.non_negative(v)?,
            "p0_acc" => self.noise.p0_acc = c.non_negative(v)?,
            "p0_dim" => self.noise.p0_dim = c.non_negative(v)?,
            "omega_assoc" => self.assoc.omega = c.open_unit(v)?,
            "mciou_gate" => {
                let g = c.float(v)?;
                if !(-3.0..=1.0).contains(&g) {
                    return Err(c.range(format!("{g} is outside [-3, 1]")));
                }
                self.assoc.mciou_gate = g;
            }
            "fs_gate" => {
                let g = c.float(v)?;
                if !((-1.0f64).exp()..=1.0f64.exp()).contains(&g) {
                    return Err(c.range(format!("{g} is outside [e^-1, e]")));
                }
                self.assoc.fs_gate = g;
            }
            "high_conf_split" => self.assoc.high_conf_split = c.closed_unit(v)?,
            "assoc_metric" => {
                self.assoc.metric = c
                    .string(v)?
                    .parse::<AssocMetric>()
                    .map_err(|_| c.range("expected giou, mciou or mciou_fs"))?
            }
            "feature_decay" => self.assoc.feature_decay = c.closed_unit(v)?,
            "f1_threshold" => self.lifecycle.f1_threshold = c.closed_unit(v)?,
            "death_threshold" => self.lifecycle.death_threshold = c.closed_unit(v)?,
            "omega_lpf" => self.lifecycle.omega_lpf = c.open_unit(v)?,
            "max_range" => self.lifecycle.max_range = c.positive(v)?,
            "candidate_promote_hits" => {
                let n = c.u32(v)?;
                if n == 0 {
                    return Err(c.range("must be >= 1"));
                }
                self.lifecycle.candidate_promote_hits = n;
            }
            "max_lost_frames" => self.lifecycle.max_lost_frames = c.u32(v)?,
            "freeze_cov_after" => self.lifecycle.freeze_cov_after = c.u32(v)?,
            "cdd_decay" => self.lifecycle.cdd_decay = c.boolean(v)?,
            "frame_rate" => self.run.frame_rate = c.positive(v)?,
            "prefilter_threshold" => self.run.prefilter_threshold = c.closed_unit(v)?,
            "iou_thres" => {
                let t = c.float(v)?;
                if !(t > 0.0 && t <= 1.0) {
                    return Err(c.range(format!("{t} is outside (0, 1]")));
                }
                self.run.iou_thres = t;
            }
            "workers" => {
                self.run.workers = usize::try_from(c.uint(v)?).map_err(|_| c.range("too large"))?
            }
            "seed" => self.run.seed = c.uint(v)?,
            _ => {
                return Err(Error::UnknownKey {
                    path: path.to_path_buf(),
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            r_floor: self.r_floor,
            ..self.noise.filter_config(
                self.variant,
                self.kappa,
                self.alpha_adapt,
                1.0 / self.run.frame_rate,
            )
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            filter: self.filter_config(),
            assoc: self.assoc,
            lifecycle: self.lifecycle,
        }
    }

    /// Every key with its current value, parseable by [`parse_config`].
    pub fn to_config_string(&self) -> String {
        let n = &self.noise;
        let a = &self.assoc;
        let l = &self.lifecycle;
        let r = &self.run;
        let mut s = String::new();
        let mut f = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let fl = |x: f64| format!("{x:?}");
        f("variant", format!("\"{}\"", self.variant.name()));
        f("kappa", fl(self.kappa));
        f("alpha_adapt", fl(self.alpha_adapt));
        f("r_floor", format!("\"{}\"", self.r_floor.name()));
        f("r_pos", fl(n.r_pos));
        f("r_yaw", fl(n.r_yaw));
        f("r_dim", fl(n.r_dim));
        f("q_pos", fl(n.q_pos));
        f("q_yaw", fl(n.q_yaw));
        f("q_vel", fl(n.q_vel));
        f("q_acc", fl(n.q_acc));
        f("q_dim", fl(n.q_dim));
        f("p0_pos", fl(n.p0_pos));
        f("p0_yaw", fl(n.p0_yaw));
        f("p0_vel", fl(n.p0_vel));
        f("p0_acc", fl(n.p0_acc));
        f("p0_dim", fl(n.p0_dim));
        f("omega_assoc", fl(a.omega));
        f("mciou_gate", fl(a.mciou_gate));
        f("fs_gate", fl(a.fs_gate));
        f("high_conf_split", fl(a.high_conf_split));
        f("assoc_metric", format!("\"{}\"", a.metric.name()));
        f("feature_decay", fl(a.feature_decay));
        f("f1_threshold", fl(l.f1_threshold));
        f("death_threshold", fl(l.death_threshold));
        f("omega_lpf", fl(l.omega_lpf));
        f("max_range", fl(l.max_range));
        f(
            "candidate_promote_hits",
            l.candidate_promote_hits.to_string(),
        );
        f("max_lost_frames", l.max_lost_frames.to_string());
        f("freeze_cov_after", l.freeze_cov_after.to_string());
        f("cdd_decay", l.cdd_decay.to_string());
        f("frame_rate", fl(r.frame_rate));
        f("prefilter_threshold", fl(r.prefilter_threshold));
        f("iou_thres", fl(r.iou_thres));
        f("workers", r.workers.to_string());
        f("seed", r.seed.to_string());
        s
    }
}

/// Parse configuration text. `path` is only used for error locations.
pub fn parse_config(text: &str, path: &Path) -> Result<Config> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|sp| text[..sp.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.message().to_string(),
        }
    })?;
    if let Some((key, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(Error::TypeError {
            path: path.to_path_buf(),
            key: key.clone(),
            expected: "scalar (sections are not supported)",
        });
    }
    let mut cfg = Config::default();
    cfg.apply(&table, path)?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}
