//! The JSON record written next to every run's outputs.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use spbtrack::{Config, StageTimings};

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timing {
    pub frames: usize,
    pub wall_s: f64,
    pub frames_per_second: f64,
    pub predict_ms: f64,
    pub associate_ms: f64,
    pub lifecycle_ms: f64,
    pub io_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl Timing {
    pub fn new(
        frames: usize,
        tracking: Duration,
        stages: StageTimings,
        io: Duration,
        wall: Duration,
    ) -> Self {
        let t = tracking.as_secs_f64();
        Timing {
            frames,
            wall_s: wall.as_secs_f64(),
            frames_per_second: if t > 0.0 { frames as f64 / t } else { 0.0 },
            predict_ms: ms(stages.predict),
            associate_ms: ms(stages.associate),
            lifecycle_ms: ms(stages.lifecycle),
            io_ms: ms(io),
        }
    }

    pub fn wall_only(wall: Duration) -> Self {
        Timing {
            wall_s: wall.as_secs_f64(),
            ..Timing::default()
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// The effective configuration, in the config-file syntax, so a run can
    /// be replayed with `--config`.
    pub config_text: Option<String>,
    pub config: Option<Config>,
    pub timing: Timing,
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &'static str, cfg: Option<&Config>, seed: u64) -> Self {
        RunManifest {
            tool: "spbtrack",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config_text: cfg.map(Config::to_config_string),
            config: cfg.cloned(),
            timing: Timing::default(),
            details: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}
