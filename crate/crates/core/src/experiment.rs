//! Experiment configuration and line-delimited report records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cwmetric::{calibrate_with, sampler_registry, MetricConstants, MAX_DEPTH};
use crate::error::{CwError, Result};
use crate::models::{ModelSpec, SystemModel, DEFAULT_C, DEFAULT_HORIZON, DEFAULT_RESOLUTION};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CWDYN_OUT_DIR";
pub const MAX_HORIZON: u32 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Metric constant c; defaults to the model's c.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    #[serde(default = "default_sampler")]
    pub sampler: String,
}

fn default_budget() -> usize {
    200
}

fn default_sampler() -> String {
    "eigen-arcs".into()
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { c: None, sample_budget: default_budget(), sampler: default_sampler() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_depth")]
    pub depth: u32,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_depth() -> u32 {
    2
}

fn default_horizon() -> u32 {
    DEFAULT_HORIZON
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { resolution: default_resolution(), depth: default_depth(), horizon: default_horizon() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    7
}

fn default_model() -> ModelSpec {
    ModelSpec::named("cat")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: default_seed(),
            model: default_model(),
            calibration: CalibrationConfig::default(),
            discretization: Discretization::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the line and column or the offending key.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CwError::Config(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|e| match e {
            CwError::Config(m) => CwError::Config(format!("{origin}: {m}")),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CwError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(CwError::Config(format!("{key}: {msg}")));
        if let Err(e) = crate::models::model_registry().get(&self.model.kind) {
            return bad("model.kind", e.to_string());
        }
        let model_c = self.model.c.unwrap_or(DEFAULT_C);
        if !(model_c > 0.0 && model_c < 0.5) {
            return bad("model.c", format!("{model_c} outside (0, 0.5)"));
        }
        if let Some(c) = self.calibration.c {
            if !(c > 0.0 && c <= model_c) {
                return bad("calibration.c", format!("{c} outside (0, model.c = {model_c}]"));
            }
        }
        if self.calibration.sample_budget == 0 {
            return bad("calibration.sample_budget", "must be positive".into());
        }
        if let Err(e) = sampler_registry().get(&self.calibration.sampler) {
            return bad("calibration.sampler", e.to_string());
        }
        let d = &self.discretization;
        if d.resolution < 2 {
            return bad("discretization.resolution", format!("{} below 2", d.resolution));
        }
        if d.depth > MAX_DEPTH {
            return bad("discretization.depth", format!("{} above {MAX_DEPTH}", d.depth));
        }
        if d.horizon == 0 || d.horizon > MAX_HORIZON {
            return bad("discretization.horizon", format!("{} outside 1..={MAX_HORIZON}", d.horizon));
        }
        if let Err(e) = SystemModel::from_spec(&self.model) {
            return bad("model", e.to_string());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn system(&self) -> Result<SystemModel> {
        let mut sys = SystemModel::from_spec(&self.model)?;
        sys.horizon = self.discretization.horizon;
        sys.resolution = self.discretization.resolution;
        Ok(sys)
    }

    pub fn constants(&self, sys: &SystemModel) -> Result<MetricConstants> {
        let c = self.calibration.c.unwrap_or(sys.c);
        calibrate_with(sys, c, self.calibration.sample_budget, &self.calibration.sampler, self.seed)
    }

    /// Output directory: the config value, else the environment, else `cwdyn-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("cwdyn-out"))
    }
}

/// One command's output: a header with wall-clock data, then deterministic
/// body records, each carrying the config hash, constants and tail bound.
pub struct ReportWriter {
    command: String,
    config_hash: String,
    constants: Option<MetricConstants>,
    started: std::time::SystemTime,
    clock: std::time::Instant,
    timings: Vec<(String, f64)>,
    bodies: Vec<Value>,
}

impl ReportWriter {
    pub fn new(command: &str, cfg: &ExperimentConfig, constants: Option<MetricConstants>) -> Self {
        ReportWriter {
            command: command.to_string(),
            config_hash: cfg.hash(),
            constants,
            started: std::time::SystemTime::now(),
            clock: std::time::Instant::now(),
            timings: Vec::new(),
            bodies: Vec::new(),
        }
    }

    pub fn timing(&mut self, label: &str, secs: f64) {
        self.timings.push((label.to_string(), secs));
    }

    /// Adds a body record of the given kind.
    pub fn record<T: Serialize>(&mut self, kind: &str, payload: &T) -> Result<()> {
        let payload = serde_json::to_value(payload).map_err(|e| CwError::Domain(format!("serialize {kind}: {e}")))?;
        self.bodies.push(json!({
            "kind": kind,
            "command": self.command,
            "config_hash": self.config_hash,
            "constants": self.constants,
            "tail_bound": self.constants.map(|c| c.tail_bound()),
            "data": payload,
        }));
        Ok(())
    }

    /// A plain data series (named columns, one row per point) for plotting.
    pub fn series(&mut self, name: &str, columns: &[&str], rows: Vec<Vec<f64>>) -> Result<()> {
        self.record("series", &json!({ "name": name, "columns": columns, "rows": rows }))
    }

    pub fn bodies(&self) -> &[Value] {
        &self.bodies
    }

    pub fn header(&self) -> Value {
        let ts = self.started.duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        json!({
            "kind": "header",
            "command": self.command,
            "config_hash": self.config_hash,
            "started_unix": ts,
            "elapsed_s": self.clock.elapsed().as_secs_f64(),
            "timings": self.timings.iter().map(|(k, v)| json!({"label": k, "seconds": v})).collect::<Vec<_>>(),
        })
    }

    /// Writes header then bodies as JSON lines.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "{}", self.header())?;
        for b in &self.bodies {
            writeln!(f, "{b}")?;
        }
        f.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(ExperimentConfig::from_toml("", "t").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_is_located() {
        let e = ExperimentConfig::from_toml("seed = 1\n[model]\nkind = \"cat\"\ncolour = 3\n", "t.toml").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("t.toml") && msg.contains("colour") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let e = ExperimentConfig::from_toml("[discretization]\nhorizon = 0\n", "t").unwrap_err();
        assert!(e.to_string().contains("discretization.horizon"));
        let e = ExperimentConfig::from_toml("[model]\nkind = \"klein\"\n", "t").unwrap_err();
        assert!(e.to_string().contains("model.kind"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
