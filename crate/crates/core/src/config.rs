//! Application configuration: one TOML document with a section per module.
//!
//! Relative paths are resolved against the directory of the config file. The
//! bot token never lives here; `telegram.token_env` names the environment
//! variable that holds it.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::DeterrentConfig;
use crate::detector::{DetectorKind, DetectorSpec, ExecutionMode, RestartPolicy};
use crate::engine::EngineConfig;
use crate::fusion::FusionConfig;
use crate::ingestion::SourceConfig;
use crate::telegram::GatewayConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config:\n  {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<FieldError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    System,
    /// Starts at `start_ms` and advances `frame_interval_ms` per frame.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoMode {
    /// Commands polled and alerts sent on the pipeline thread, between frames.
    Inline,
    /// Dedicated poller and sender threads.
    Background,
}

fn default_backoff() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_max_restarts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartConfig {
    #[serde(default = "default_max_restarts")]
    pub max_restarts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_s: Vec<f64>,
}

impl Default for RestartConfig {
    fn default() -> Self {
        Self {
            max_restarts: default_max_restarts(),
            backoff_s: default_backoff(),
        }
    }
}

impl RestartConfig {
    pub fn policy(&self) -> RestartPolicy {
        RestartPolicy {
            max_restarts: self.max_restarts,
            backoff: self
                .backoff_s
                .iter()
                .map(|s| std::time::Duration::from_secs_f64(*s))
                .collect(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}
fn default_interval() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default)]
    pub execution: ExecutionMode,
    /// Action log, snapshots and the mock outbox go here.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub clock: ClockKind,
    #[serde(default)]
    pub start_ms: u64,
    #[serde(default = "default_interval")]
    pub frame_interval_ms: u64,
    /// Defaults to inline for the mock transport and background for live.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io: Option<IoMode>,
    #[serde(default)]
    pub restart: RestartConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            execution: ExecutionMode::Sequential,
            output_dir: default_output_dir(),
            clock: ClockKind::System,
            start_ms: 0,
            frame_interval_ms: default_interval(),
            io: None,
            restart: RestartConfig::default(),
        }
    }
}

fn default_iou() -> f64 {
    0.5
}
fn default_report_json() -> PathBuf {
    PathBuf::from("reports/eval.json")
}
fn default_report_table() -> PathBuf {
    PathBuf::from("reports/eval.txt")
}
fn default_bench_json() -> PathBuf {
    PathBuf::from("reports/bench.json")
}
fn default_bench_table() -> PathBuf {
    PathBuf::from("reports/bench.txt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    #[serde(default = "default_iou")]
    pub iou_thresh: f64,
    #[serde(default = "default_report_json")]
    pub report_json: PathBuf,
    #[serde(default = "default_report_table")]
    pub report_table: PathBuf,
    #[serde(default = "default_bench_json")]
    pub bench_json: PathBuf,
    #[serde(default = "default_bench_table")]
    pub bench_table: PathBuf,
    /// `actual,predicted` CSV of recognition trials; derived from the
    /// dataset when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_log: Option<PathBuf>,
    /// Class-names file; defaults to `classes.txt` in the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_thresh: default_iou(),
            report_json: default_report_json(),
            report_table: default_report_table(),
            bench_json: default_bench_json(),
            bench_table: default_bench_table(),
            trial_log: None,
            class_names: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub source: SourceConfig,
    pub detectors: Vec<DetectorSpec>,
    pub fusion: FusionConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    pub telegram: GatewayConfig,
    pub deterrent: DeterrentConfig,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub run: RunOptions,
}

impl AppConfig {
    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without resolving or validating.
    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| e.to_string())?;
        if raw
            .get("telegram")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.keys().any(|k| k.contains("token") && k != "token_env"))
        {
            return Err("telegram: the bot token is read from the environment variable named by \
                        telegram.token_env and must not appear in the config file"
                .into());
        }
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if !self.source.uri.starts_with("/dev/") && Path::new(&self.source.uri).is_relative() {
            self.source.uri = base.join(&self.source.uri).display().to_string();
        }
        fix(&mut self.source.spool_dir);
        for d in &mut self.detectors {
            let launch = Path::new(&d.launch);
            let pathlike = d.kind == DetectorKind::FixtureReplay || launch.components().count() > 1;
            if pathlike && launch.is_relative() {
                d.launch = base.join(launch).display().to_string();
            }
        }
        fix(&mut self.deterrent.sound_path);
        fix(&mut self.run.output_dir);
        fix(&mut self.eval.report_json);
        fix(&mut self.eval.report_table);
        fix(&mut self.eval.bench_json);
        fix(&mut self.eval.bench_table);
        if let Some(p) = self.eval.trial_log.as_mut() {
            fix(p);
        }
        if let Some(p) = self.eval.class_names.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut push = |field: String, r: Result<(), String>| {
            if let Err(message) = r {
                errs.push(FieldError { field, message });
            }
        };

        push("source".into(), self.source.validate().map_err(|e| e.to_string()));
        if self.detectors.is_empty() {
            push("detectors".into(), Err("at least one detector is required".into()));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            push(format!("detectors[{i}]"), d.validate());
            if self.detectors[..i].iter().any(|o| o.id == d.id) {
                push(format!("detectors[{i}].id"), Err(format!("duplicate detector id {}", d.id)));
            }
        }
        push("fusion".into(), self.fusion.validate().map_err(|e| e.to_string()));
        push("engine".into(), self.engine.validate());
        push("telegram".into(), self.telegram.validate());
        push("deterrent".into(), self.deterrent.validate());
        if !(0.0..=1.0).contains(&self.eval.iou_thresh) {
            push(
                "eval.iou_thresh".into(),
                Err(format!("{} outside [0, 1]", self.eval.iou_thresh)),
            );
        }
        if self.run.restart.backoff_s.iter().any(|s| !s.is_finite() || *s < 0.0) {
            push("run.restart.backoff_s".into(), Err("entries must be >= 0".into()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn io_mode(&self) -> IoMode {
        self.run.io.unwrap_or(match self.telegram.transport {
            crate::telegram::TransportKind::Mock => IoMode::Inline,
            crate::telegram::TransportKind::Live => IoMode::Background,
        })
    }
}
