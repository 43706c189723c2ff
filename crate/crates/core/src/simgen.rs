//! Synthetic pedestrian scenarios: ground-truth trajectories plus noisy,
//! occluded, cluttered detections with appearance features.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use serde::Serialize;
use toml::{Table, Value};

use crate::assoc::FeatureVec;
use crate::error::{Error, Result};
use crate::filter::MIN_DIMENSION;
use crate::geometry::{normalize_angle, Box3D};
use crate::io::{
    write_detections, write_feature_sidecar, write_labels, Detection3D, FeatureSidecar, FrameInput,
    TrackRecord,
};
use crate::lifecycle::{EgoPose, LabeledDetection};

/// Integration step of the trajectory simulation, seconds.
const SIM_DT: f64 = 0.01;
const PEDESTRIAN_DIMS: [f64; 3] = [0.6, 0.6, 1.75];
const DIM_PRIOR_SIGMA: f64 = 0.05;
const MIN_SPAWN_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    Linear,
    Sinusoidal,
    StopAndGo,
    RandomTurn,
}

impl std::str::FromStr for MotionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Self::Linear),
            "sinusoidal" => Ok(Self::Sinusoidal),
            "stop_and_go" => Ok(Self::StopAndGo),
            "random_turn" => Ok(Self::RandomTurn),
            o => Err(Error::InvalidSpec(format!("unknown motion model `{o}`"))),
        }
    }
}

/// Agent `agent` produces no detections in frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Occlusion {
    pub agent: u64,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub n_pedestrians: usize,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub frame_rate: f64,
    /// Assigned to agents round-robin.
    pub motion: Vec<MotionModel>,
    pub occlusions: Vec<Occlusion>,
    pub pos_sigma: f64,
    pub yaw_sigma: f64,
    pub dim_sigma: f64,
    /// Probability that a visible agent yields no detection in a frame.
    pub dropout: f64,
    /// Mean number of false positives per frame (Poisson).
    pub fp_rate: f64,
    pub tp_conf_alpha: f64,
    pub tp_conf_beta: f64,
    pub fp_conf_alpha: f64,
    pub fp_conf_beta: f64,
    /// Scales position noise by `1 + k·(1 − c)/c` for confidence `c`.
    pub conf_noise_coupling: f64,
    /// 0 disables features.
    pub feature_dim: usize,
    /// Per-component σ added to each agent's latent feature.
    pub feature_noise: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Side of the square spawn area, meters.
    pub area_size: f64,
    /// x of the spawn-area center; the sensor sits at the origin.
    pub area_x: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_pedestrians: 8,
            duration: 20.0,
            frame_rate: 10.0,
            motion: vec![MotionModel::Sinusoidal, MotionModel::StopAndGo],
            occlusions: Vec::new(),
            pos_sigma: 0.05,
            yaw_sigma: 0.05,
            dim_sigma: 0.02,
            dropout: 0.0,
            fp_rate: 0.0,
            tp_conf_alpha: 8.0,
            tp_conf_beta: 2.0,
            fp_conf_alpha: 2.0,
            fp_conf_beta: 8.0,
            conf_noise_coupling: 0.0,
            feature_dim: 16,
            feature_noise: 0.3,
            speed_min: 0.8,
            speed_max: 1.6,
            area_size: 12.0,
            area_x: 15.0,
            seed: 0,
        }
    }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidSpec(msg.into()))
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        check(self.n_pedestrians >= 1, "n_pedestrians must be >= 1")?;
        check(pos(self.duration), "duration must be > 0")?;
        check(pos(self.frame_rate), "frame_rate must be > 0")?;
        check(!self.motion.is_empty(), "motion list is empty")?;
        check(nonneg(self.pos_sigma), "pos_sigma must be >= 0")?;
        check(nonneg(self.yaw_sigma), "yaw_sigma must be >= 0")?;
        check(nonneg(self.dim_sigma), "dim_sigma must be >= 0")?;
        check(unit(self.dropout), "dropout must be in [0, 1]")?;
        check(unit(self.fp_rate), "fp_rate must be in [0, 1]")?;
        for (k, v) in [
            ("tp_conf_alpha", self.tp_conf_alpha),
            ("tp_conf_beta", self.tp_conf_beta),
            ("fp_conf_alpha", self.fp_conf_alpha),
            ("fp_conf_beta", self.fp_conf_beta),
        ] {
            check(pos(v), format!("{k} must be > 0"))?;
        }
        check(
            nonneg(self.conf_noise_coupling),
            "conf_noise_coupling must be >= 0",
        )?;
        check(nonneg(self.feature_noise), "feature_noise must be >= 0")?;
        check(
            nonneg(self.speed_min)
                && self.speed_max >= self.speed_min
                && self.speed_max.is_finite(),
            "need 0 <= speed_min <= speed_max",
        )?;
        check(pos(self.area_size), "area_size must be > 0")?;
        check(self.area_x.is_finite(), "area_x must be finite")?;
        let n_frames = self.n_frames();
        for o in &self.occlusions {
            check(
                (o.agent as usize) < self.n_pedestrians,
                format!(
                    "occlusion names agent {} of {}",
                    o.agent, self.n_pedestrians
                ),
            )?;
            check(
                o.start <= o.end,
                format!("occlusion {}:{}-{} is reversed", o.agent, o.start, o.end),
            )?;
            check(
                (o.start as usize) < n_frames,
                format!(
                    "occlusion {}:{}-{} starts after the last frame",
                    o.agent, o.start, o.end
                ),
            )?;
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        (self.duration * self.frame_rate).round().max(1.0) as usize
    }

    fn occluded(&self, agent: u64, frame: u32) -> bool {
        self.occlusions
            .iter()
            .any(|o| o.agent == agent && (o.start..=o.end).contains(&frame))
    }

    /// Apply keys from a flat key-value table.
    pub fn apply(&mut self, table: &Table) -> Result<()> {
        for (k, v) in table {
            let num = || -> Result<f64> {
                match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(Error::InvalidSpec(format!("`{k}` must be a number"))),
                }
            };
            let int = || -> Result<u64> {
                v.as_integer()
                    .and_then(|i| u64::try_from(i).ok())
                    .ok_or_else(|| {
                        Error::InvalidSpec(format!("`{k}` must be a non-negative integer"))
                    })
            };
            let text = || -> Result<&str> {
                v.as_str()
                    .ok_or_else(|| Error::InvalidSpec(format!("`{k}` must be a string")))
            };
            match k.as_str() {
                "n_pedestrians" => self.n_pedestrians = int()? as usize,
                "duration" => self.duration = num()?,
                "frame_rate" => self.frame_rate = num()?,
                "motion" => {
                    self.motion = text()?
                        .split(',')
                        .map(str::parse)
                        .collect::<Result<Vec<_>>>()?
                }
                "occlusions" => self.occlusions = parse_occlusions(text()?)?,
                "pos_sigma" => self.pos_sigma = num()?,
                "yaw_sigma" => self.yaw_sigma = num()?,
                "dim_sigma" => self.dim_sigma = num()?,
                "dropout" => self.dropout = num()?,
                "fp_rate" => self.fp_rate = num()?,
                "tp_conf_alpha" => self.tp_conf_alpha = num()?,
                "tp_conf_beta" => self.tp_conf_beta = num()?,
                "fp_conf_alpha" => self.fp_conf_alpha = num()?,
                "fp_conf_beta" => self.fp_conf_beta = num()?,
                "conf_noise_coupling" => self.conf_noise_coupling = num()?,
                "feature_dim" => self.feature_dim = int()? as usize,
                "feature_noise" => self.feature_noise = num()?,
                "speed_min" => self.speed_min = num()?,
                "speed_max" => self.speed_max = num()?,
                "area_size" => self.area_size = num()?,
                "area_x" => self.area_x = num()?,
                "seed" => self.seed = int()?,
                _ => return Err(Error::InvalidSpec(format!("unknown key `{k}`"))),
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidSpec(e.message().to_string()))?;
        let mut s = Self::default();
        s.apply(&table)?;
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Key-value text that [`ScenarioSpec::parse`] reads back.
    pub fn to_spec_string(&self) -> String {
        let mut s = String::new();
        let motion: Vec<&str> = self
            .motion
            .iter()
            .map(|m| match m {
                MotionModel::Linear => "linear",
                MotionModel::Sinusoidal => "sinusoidal",
                MotionModel::StopAndGo => "stop_and_go",
                MotionModel::RandomTurn => "random_turn",
            })
            .collect();
        let occ: Vec<String> = self
            .occlusions
            .iter()
            .map(|o| format!("{}:{}-{}", o.agent, o.start, o.end))
            .collect();
        let _ = writeln!(s, "n_pedestrians = {}", self.n_pedestrians);
        let _ = writeln!(s, "duration = {:?}", self.duration);
        let _ = writeln!(s, "frame_rate = {:?}", self.frame_rate);
        let _ = writeln!(s, "motion = \"{}\"", motion.join(","));
        let _ = writeln!(s, "occlusions = \"{}\"", occ.join(","));
        for (k, v) in [
            ("pos_sigma", self.pos_sigma),
            ("yaw_sigma", self.yaw_sigma),
            ("dim_sigma", self.dim_sigma),
            ("dropout", self.dropout),
            ("fp_rate", self.fp_rate),
            ("tp_conf_alpha", self.tp_conf_alpha),
            ("tp_conf_beta", self.tp_conf_beta),
            ("fp_conf_alpha", self.fp_conf_alpha),
            ("fp_conf_beta", self.fp_conf_beta),
            ("conf_noise_coupling", self.conf_noise_coupling),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "feature_dim = {}", self.feature_dim);
        for (k, v) in [
            ("feature_noise", self.feature_noise),
            ("speed_min", self.speed_min),
            ("speed_max", self.speed_max),
            ("area_size", self.area_size),
            ("area_x", self.area_x),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// `"agent:start-end, ..."`, frames inclusive.
pub fn parse_occlusions(s: &str) -> Result<Vec<Occlusion>> {
    let bad = |item: &str| {
        Error::InvalidSpec(format!("bad occlusion `{item}`, expected agent:start-end"))
    };
    s.split([',', ';'])
        .map(str::trim)
        .filter(|i| !i.is_empty())
        .map(|item| {
            let (a, range) = item.split_once(':').ok_or_else(|| bad(item))?;
            let (st, en) = range.split_once('-').ok_or_else(|| bad(item))?;
            Ok(Occlusion {
                agent: a.trim().parse().map_err(|_| bad(item))?,
                start: st.trim().parse().map_err(|_| bad(item))?,
                end: en.trim().parse().map_err(|_| bad(item))?,
            })
        })
        .collect()
}

/// A generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frame_rate: f64,
    pub n_frames: usize,
    /// Ground truth; `id` is the agent index.
    pub gt: Vec<TrackRecord>,
    /// Detections in file order, features attached when enabled.
    pub detections: Vec<Detection3D>,
    /// Source agent of each detection; `None` for false positives.
    pub det_agents: Vec<Option<u64>>,
}

struct Agent {
    model: MotionModel,
    pos: [f64; 2],
    heading: f64,
    yaw: f64,
    speed: f64,
    dims: [f64; 3],
    amp: f64,
    freq: f64,
    phase: f64,
    /// Time left in the current walk, stop, or turn segment.
    timer: f64,
    moving: bool,
    turn_rate: f64,
    t: f64,
}

impl Agent {
    fn spawn(model: MotionModel, pos: [f64; 2], rng: &mut ChaCha8Rng, spec: &ScenarioSpec) -> Self {
        let heading = rng.random_range(-PI..PI);
        let speed = if spec.speed_max > spec.speed_min {
            rng.random_range(spec.speed_min..spec.speed_max)
        } else {
            spec.speed_min
        };
        let dim_noise = Normal::new(0.0, DIM_PRIOR_SIGMA).expect("valid sigma");
        let mut dims = PEDESTRIAN_DIMS;
        for d in &mut dims {
            *d = (*d + dim_noise.sample(rng)).max(0.2);
        }
        Self {
            model,
            pos,
            heading,
            yaw: heading,
            speed,
            dims,
            amp: rng.random_range(0.2..0.6),
            freq: rng.random_range(0.1..0.25),
            phase: rng.random_range(0.0..2.0 * PI),
            timer: rng.random_range(2.0..4.0),
            moving: true,
            turn_rate: 0.0,
            t: 0.0,
        }
    }

    fn velocity(&self) -> [f64; 2] {
        let (c, s) = (self.heading.cos(), self.heading.sin());
        match self.model {
            MotionModel::Linear | MotionModel::RandomTurn => [self.speed * c, self.speed * s],
            MotionModel::Sinusoidal => {
                let lat = self.amp
                    * 2.0
                    * PI
                    * self.freq
                    * (2.0 * PI * self.freq * self.t + self.phase).cos();
                [self.speed * c - lat * s, self.speed * s + lat * c]
            }
            MotionModel::StopAndGo => {
                if self.moving {
                    [self.speed * c, self.speed * s]
                } else {
                    [0.0, 0.0]
                }
            }
        }
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha8Rng) {
        match self.model {
            MotionModel::StopAndGo => {
                self.timer -= dt;
                if self.timer <= 0.0 {
                    self.moving = !self.moving;
                    self.timer = if self.moving {
                        rng.random_range(2.0..4.0)
                    } else {
                        rng.random_range(0.8..2.0)
                    };
                }
            }
            MotionModel::RandomTurn => {
                self.timer -= dt;
                if self.timer <= 0.0 {
                    self.turn_rate = rng.random_range(-0.8..0.8);
                    self.timer = rng.random_range(1.5..3.0);
                }
                self.heading = normalize_angle(self.heading + self.turn_rate * dt);
            }
            MotionModel::Linear | MotionModel::Sinusoidal => {}
        }
        let v = self.velocity();
        self.pos[0] += v[0] * dt;
        self.pos[1] += v[1] * dt;
        if v[0].hypot(v[1]) > 0.05 {
            self.yaw = v[1].atan2(v[0]);
        }
        self.t += dt;
    }

    fn bbox(&self) -> Box3D {
        let [w, l, h] = self.dims;
        Box3D::new(self.pos[0], self.pos[1], 0.5 * h, self.yaw, w, l, h).expect("valid agent box")
    }
}

fn spawn_positions(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let half = 0.5 * spec.area_size;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(spec.n_pedestrians);
    for _ in 0..spec.n_pedestrians {
        let mut p = [0.0; 2];
        for _ in 0..1000 {
            p = [
                spec.area_x + rng.random_range(-half..half),
                rng.random_range(-half..half),
            ];
            let clear = out
                .iter()
                .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= MIN_SPAWN_SEPARATION);
            if clear {
                break;
            }
        }
        out.push(p);
    }
    out
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    (0..dim).map(|_| n.sample(rng)).collect()
}

fn feature_from(values: Vec<f64>) -> FeatureVec {
    FeatureVec::new(values).unwrap_or_else(|_| {
        // a zero draw is measure-zero; fall back to a fixed unit vector
        let mut v = vec![0.0; 1];
        v[0] = 1.0;
        FeatureVec::new(v).expect("unit vector")
    })
}

/// Generate a scenario; identical specs give identical scenarios.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    // Separate streams so detection noise never perturbs the trajectories.
    let mut motion_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut det_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    det_rng.set_stream(1);

    let positions = spawn_positions(spec, &mut motion_rng);
    let mut agents: Vec<Agent> = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| Agent::spawn(spec.motion[i % spec.motion.len()], p, &mut motion_rng, spec))
        .collect();
    let latents: Vec<Vec<f64>> = (0..spec.n_pedestrians)
        .map(|_| gaussian_vec(&mut motion_rng, spec.feature_dim, 1.0))
        .collect();

    let n_frames = spec.n_frames();
    let frame_dt = 1.0 / spec.frame_rate;
    let substeps = (frame_dt / SIM_DT).ceil().max(1.0) as usize;
    let sub_dt = frame_dt / substeps as f64;

    let tp_conf = Beta::new(spec.tp_conf_alpha, spec.tp_conf_beta)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let fp_conf = Beta::new(spec.fp_conf_alpha, spec.fp_conf_beta)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let fp_count = if spec.fp_rate > 0.0 {
        Some(Poisson::new(spec.fp_rate).map_err(|e| Error::InvalidSpec(e.to_string()))?)
    } else {
        None
    };
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let half = 0.5 * spec.area_size;

    let mut gt = Vec::new();
    let mut detections = Vec::new();
    let mut det_agents = Vec::new();
    for frame in 0..n_frames as u32 {
        if frame > 0 {
            for a in &mut agents {
                for _ in 0..substeps {
                    a.advance(sub_dt, &mut motion_rng);
                }
            }
        }
        let mut frame_dets: Vec<(Detection3D, Option<u64>)> = Vec::new();
        for (i, a) in agents.iter().enumerate() {
            let id = i as u64;
            let b = a.bbox();
            gt.push(TrackRecord {
                frame,
                id,
                class_label: "Pedestrian".into(),
                bbox: b,
                score: None,
            });
            // Draw every variate so one agent's visibility never shifts
            // the noise of another.
            let dropped = det_rng.random::<f64>() < spec.dropout;
            let conf: f64 = tp_conf.sample(&mut det_rng);
            let e: [f64; 7] = std::array::from_fn(|_| std_normal.sample(&mut det_rng));
            let fnoise = gaussian_vec(&mut det_rng, spec.feature_dim, spec.feature_noise.max(0.0));
            if dropped || spec.occluded(id, frame) {
                continue;
            }
            let scale = 1.0 + spec.conf_noise_coupling * (1.0 - conf) / conf.max(1e-3);
            let sp = spec.pos_sigma * scale;
            let noisy = Box3D::new(
                b.x + sp * e[0],
                b.y + sp * e[1],
                b.z + sp * e[2],
                normalize_angle(b.yaw + spec.yaw_sigma * e[3]),
                (b.w + spec.dim_sigma * e[4]).max(MIN_DIMENSION),
                (b.l + spec.dim_sigma * e[5]).max(MIN_DIMENSION),
                (b.h + spec.dim_sigma * e[6]).max(MIN_DIMENSION),
            )?;
            let feature = (spec.feature_dim > 0).then(|| {
                feature_from(latents[i].iter().zip(&fnoise).map(|(l, n)| l + n).collect())
            });
            frame_dets.push((
                Detection3D {
                    frame,
                    bbox: noisy,
                    confidence: conf,
                    feature,
                    class_label: "Pedestrian".into(),
                },
                Some(id),
            ));
        }
        let n_fp = fp_count
            .map(|p| p.sample(&mut det_rng) as usize)
            .unwrap_or(0);
        for _ in 0..n_fp {
            let x = spec.area_x + det_rng.random_range(-half..half);
            let y = det_rng.random_range(-half..half);
            let h = 1.75 + 0.2 * std_normal.sample(&mut det_rng);
            let h = h.max(0.5);
            let b = Box3D::new(
                x,
                y,
                0.5 * h,
                det_rng.random_range(-PI..PI),
                0.6 + 0.1 * std_normal.sample(&mut det_rng).abs(),
                0.6 + 0.1 * std_normal.sample(&mut det_rng).abs(),
                h,
            )?;
            let conf = fp_conf.sample(&mut det_rng);
            let feature = (spec.feature_dim > 0)
                .then(|| feature_from(gaussian_vec(&mut det_rng, spec.feature_dim, 1.0)));
            frame_dets.push((
                Detection3D {
                    frame,
                    bbox: b,
                    confidence: conf,
                    feature,
                    class_label: "Pedestrian".into(),
                },
                None,
            ));
        }
        frame_dets.shuffle(&mut det_rng);
        for (d, a) in frame_dets {
            detections.push(d);
            det_agents.push(a);
        }
    }
    Ok(Scenario {
        frame_rate: spec.frame_rate,
        n_frames,
        gt,
        detections,
        det_agents,
    })
}

impl Scenario {
    /// Frames for the tracker; the sensor sits at the origin.
    pub fn frames(&self) -> Vec<FrameInput> {
        let mut frames: Vec<FrameInput> = (0..self.n_frames)
            .map(|i| FrameInput {
                frame: i as u32,
                timestamp: i as f64 / self.frame_rate,
                detections: Vec::new(),
                ego: EgoPose::ORIGIN,
            })
            .collect();
        for d in &self.detections {
            frames[d.frame as usize].detections.push(d.clone());
        }
        frames
    }

    /// Detection confidences labelled true/false positive.
    pub fn labeled_detections(&self) -> Vec<LabeledDetection> {
        self.detections
            .iter()
            .zip(&self.det_agents)
            .map(|(d, a)| LabeledDetection {
                confidence: d.confidence,
                true_positive: a.is_some(),
            })
            .collect()
    }

    /// Features keyed by frame and in-frame detection index.
    pub fn feature_sidecar(&self) -> Option<FeatureSidecar> {
        let dim = self
            .detections
            .iter()
            .find_map(|d| d.feature.as_ref())?
            .len();
        let mut s = FeatureSidecar::new(dim);
        let mut idx_in_frame = vec![0usize; self.n_frames];
        for d in &self.detections {
            let k = &mut idx_in_frame[d.frame as usize];
            if let Some(f) = &d.feature {
                s.insert(d.frame, *k, f.clone()).ok()?;
            }
            *k += 1;
        }
        Some(s)
    }

    /// Keep every `factor`-th frame, renumbered; timestamps are unchanged.
    pub fn decimate(&self, factor: u32) -> Result<Scenario> {
        if factor == 0 {
            return Err(Error::InvalidSpec("decimation factor must be >= 1".into()));
        }
        let keep = |f: u32| f.is_multiple_of(factor);
        let gt = self
            .gt
            .iter()
            .filter(|r| keep(r.frame))
            .map(|r| TrackRecord {
                frame: r.frame / factor,
                ..r.clone()
            })
            .collect();
        let (detections, det_agents) = self
            .detections
            .iter()
            .zip(&self.det_agents)
            .filter(|(d, _)| keep(d.frame))
            .map(|(d, a)| {
                (
                    Detection3D {
                        frame: d.frame / factor,
                        ..d.clone()
                    },
                    *a,
                )
            })
            .unzip();
        Ok(Scenario {
            frame_rate: self.frame_rate / factor as f64,
            n_frames: self.n_frames.div_ceil(factor as usize),
            gt,
            detections,
            det_agents,
        })
    }

    /// Writes `gt.txt`, `detections.txt` and, with features, `features.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_labels(&dir.join("gt.txt"), &self.gt)?;
        write_detections(&dir.join("detections.txt"), &self.detections)?;
        if let Some(s) = self.feature_sidecar() {
            write_feature_sidecar(&dir.join("features.csv"), &s)?;
        }
        Ok(())
    }
}

/// Keep every `factor`-th frame, renumbered; timestamps are unchanged.
pub fn decimate(frames: &[FrameInput], factor: u32) -> Result<Vec<FrameInput>> {
    if factor == 0 {
        return Err(Error::InvalidSpec("decimation factor must be >= 1".into()));
    }
    Ok(frames
        .iter()
        .enumerate()
        .filter(|(i, _)| i % factor as usize == 0)
        .map(|(i, f)| {
            let n = (i / factor as usize) as u32;
            FrameInput {
                frame: n,
                timestamp: f.timestamp,
                detections: f
                    .detections
                    .iter()
                    .map(|d| Detection3D {
                        frame: n,
                        ..d.clone()
                    })
                    .collect(),
                ego: f.ego,
            }
        })
        .collect())
}
