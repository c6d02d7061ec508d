//! Detector backends behind one interface: external adapter processes that
//! speak the line protocol, and fixture replay for tests and evaluation.
//! [`SupervisedDetector`] adds the restart policy on top of either.

pub mod fixture;
pub mod process;
pub mod protocol;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::geometry::{Detection, DetectorId, FrameId};

pub use fixture::{FixtureDetector, ReplayFile, ReplayFrame};
pub use process::ProcessDetector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("detector {detector} failed to start: {reason}")]
    Startup {
        detector: String,
        reason: String,
        diagnostics: String,
    },
    #[error("detector {detector} faulted on frame {frame_id}: {reason}")]
    Fault {
        detector: String,
        frame_id: String,
        reason: String,
    },
    #[error("detector {detector} timed out on frame {frame_id} after {after:?}")]
    Timeout {
        detector: String,
        frame_id: String,
        after: Duration,
    },
    #[error("detector {0} is waiting to be restarted")]
    Restarting(String),
    #[error("detector {0} exhausted its restarts and is offline")]
    Degraded(String),
    #[error("detector {0} has been stopped")]
    Stopped(String),
}

/// Detections for one frame plus timing. `elapsed_ms` is measured by the host
/// around the whole request; `reported_ms` is what the adapter claims its
/// inference took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub frame_id: FrameId,
    pub detections: Vec<Detection>,
    pub elapsed_ms: f64,
    pub reported_ms: Option<f64>,
}

pub trait Detector: Send {
    fn id(&self) -> &DetectorId;
    fn infer(&mut self, frame_id: &FrameId, image: &Path) -> Result<InferenceResult, DetectorError>;
    fn frames_served(&self) -> u64;
    /// Releases the backend. Safe to call more than once.
    fn stop(&mut self);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    ExternalProcess,
    FixtureReplay,
}

fn default_startup_timeout() -> f64 {
    30.0
}
fn default_infer_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub id: DetectorId,
    pub kind: DetectorKind,
    /// Program to run (external) or replay file path (fixture).
    pub launch: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<String>,
    /// Artificial per-frame delay for fixture detectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
    #[serde(default = "default_startup_timeout")]
    pub startup_timeout_s: f64,
    #[serde(default = "default_infer_timeout")]
    pub infer_timeout_s: f64,
}

impl DetectorSpec {
    pub fn fixture(id: &str, path: impl Into<PathBuf>) -> Self {
        Self {
            id: DetectorId::new(id).expect("detector id"),
            kind: DetectorKind::FixtureReplay,
            launch: path.into().display().to_string(),
            args: Vec::new(),
            delay_ms: None,
            startup_timeout_s: default_startup_timeout(),
            infer_timeout_s: default_infer_timeout(),
        }
    }

    pub fn external(id: &str, program: &str, args: &[&str]) -> Self {
        Self {
            id: DetectorId::new(id).expect("detector id"),
            kind: DetectorKind::ExternalProcess,
            launch: program.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
            delay_ms: None,
            startup_timeout_s: default_startup_timeout(),
            infer_timeout_s: default_infer_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.startup_timeout_s.is_nan() || self.startup_timeout_s <= 0.0 {
            return Err("startup_timeout_s must be positive".into());
        }
        if self.infer_timeout_s.is_nan() || self.infer_timeout_s <= 0.0 {
            return Err("infer_timeout_s must be positive".into());
        }
        if self.launch.trim().is_empty() {
            return Err("launch is empty".into());
        }
        if self.kind == DetectorKind::ExternalProcess && self.delay_ms.is_some() {
            return Err("delay_ms applies to fixture_replay detectors only".into());
        }
        Ok(())
    }
}

pub fn start(spec: &DetectorSpec) -> Result<Box<dyn Detector>, DetectorError> {
    match spec.kind {
        DetectorKind::FixtureReplay => Ok(Box::new(FixtureDetector::open(
            spec.id.clone(),
            Path::new(&spec.launch),
            spec.delay_ms.map(Duration::from_millis),
        )?)),
        DetectorKind::ExternalProcess => Ok(Box::new(ProcessDetector::spawn(
            spec.id.clone(),
            &spec.launch,
            &spec.args,
            Duration::from_secs_f64(spec.startup_timeout_s),
            Duration::from_secs_f64(spec.infer_timeout_s),
        )?)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartPolicy {
    pub max_restarts: u32,
    pub backoff: Vec<Duration>,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        Self {
            max_restarts: 3,
            backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
        }
    }
}

impl RestartPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let i = (attempt as usize).min(self.backoff.len().saturating_sub(1));
        self.backoff.get(i).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Healthy,
    Restarting,
    Degraded,
}

/// A detector plus its restart policy. A fault stops the backend; the next
/// restart is attempted lazily on the first request after the backoff delay,
/// so the pipeline is never blocked waiting for a restart.
pub struct SupervisedDetector {
    spec: DetectorSpec,
    inner: Option<Box<dyn Detector>>,
    policy: RestartPolicy,
    restarts: u32,
    next_attempt: Option<Instant>,
    degraded: bool,
    notice_pending: bool,
    faults: u64,
}

impl SupervisedDetector {
    pub fn start(spec: DetectorSpec, policy: RestartPolicy) -> Result<Self, DetectorError> {
        let inner = start(&spec)?;
        Ok(Self {
            spec,
            inner: Some(inner),
            policy,
            restarts: 0,
            next_attempt: None,
            degraded: false,
            notice_pending: false,
            faults: 0,
        })
    }

    pub fn id(&self) -> &DetectorId {
        &self.spec.id
    }

    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn health(&self) -> Health {
        if self.degraded {
            Health::Degraded
        } else if self.inner.is_none() {
            Health::Restarting
        } else {
            Health::Healthy
        }
    }

    /// Returns true once, right after the detector has gone offline for good.
    pub fn take_degraded_notice(&mut self) -> bool {
        std::mem::take(&mut self.notice_pending)
    }

    fn on_fault(&mut self) {
        self.faults += 1;
        if let Some(mut d) = self.inner.take() {
            d.stop();
        }
        if self.restarts >= self.policy.max_restarts {
            warn!(detector = %self.spec.id, faults = self.faults, "restarts exhausted, running degraded");
            self.degraded = true;
            self.notice_pending = true;
        } else {
            self.next_attempt = Some(Instant::now() + self.policy.delay(self.restarts));
        }
    }

    pub fn infer(&mut self, frame_id: &FrameId, image: &Path) -> Result<InferenceResult, DetectorError> {
        if self.degraded {
            return Err(DetectorError::Degraded(self.spec.id.to_string()));
        }
        if self.inner.is_none() {
            if self.next_attempt.is_some_and(|t| Instant::now() < t) {
                return Err(DetectorError::Restarting(self.spec.id.to_string()));
            }
            self.restarts += 1;
            info!(detector = %self.spec.id, attempt = self.restarts, "restarting detector");
            match start(&self.spec) {
                Ok(d) => self.inner = Some(d),
                Err(e) => {
                    self.on_fault();
                    return Err(e);
                }
            }
        }
        let inner = self.inner.as_mut().expect("detector running");
        match inner.infer(frame_id, image) {
            Ok(r) => Ok(r),
            Err(e) => {
                warn!(detector = %self.spec.id, error = %e, "detector fault");
                self.on_fault();
                Err(e)
            }
        }
    }

    pub fn stop(&mut self) {
        if let Some(mut d) = self.inner.take() {
            d.stop();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Parallel,
}

/// Results of running every detector on one frame, in configuration order,
/// plus the wall time of the whole step in milliseconds.
pub struct FrameInference {
    pub results: Vec<Result<InferenceResult, DetectorError>>,
    pub pipeline_ms: f64,
}

pub fn infer_all(
    detectors: &mut [SupervisedDetector],
    frame_id: &FrameId,
    image: &Path,
    mode: ExecutionMode,
) -> FrameInference {
    let start = Instant::now();
    let results = match mode {
        ExecutionMode::Sequential => detectors
            .iter_mut()
            .map(|d| d.infer(frame_id, image))
            .collect(),
        ExecutionMode::Parallel => std::thread::scope(|s| {
            let handles: Vec<_> = detectors
                .iter_mut()
                .map(|d| s.spawn(move || d.infer(frame_id, image)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("detector thread panicked"))
                .collect()
        }),
    };
    FrameInference {
        results,
        pipeline_ms: start.elapsed().as_secs_f64() * 1000.0,
    }
}
