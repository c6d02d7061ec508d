//! Entry points: live monitoring, dataset evaluation and latency benchmarking.

mod bench;
mod evaluate;
mod monitor;

use std::sync::Arc;

use thiserror::Error;
use tracing::warn;

use crate::clock::{Clock, ManualClock, SystemClock};
use crate::config::{AppConfig, ClockKind};
use crate::detector::SupervisedDetector;

pub use bench::{render_bench_table, run_bench, BenchReport, BenchRow, ALL_GROUP, PIPELINE};
pub use evaluate::{run_evaluate, EvalOutcome};
pub use monitor::{run_monitor, MonitorEnv, MonitorSummary};

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Config = 2,
    Startup = 3,
    Runtime = 4,
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("startup failed: {0}")]
    Startup(String),
    #[error("fatal runtime error: {0}")]
    Runtime(String),
}

impl AppError {
    pub fn status(&self) -> ExitStatus {
        match self {
            AppError::Config(_) => ExitStatus::Config,
            AppError::Startup(_) => ExitStatus::Startup,
            AppError::Runtime(_) => ExitStatus::Runtime,
        }
    }
}

/// Either a shared simulated clock (so the caller can advance it) or the
/// system clock.
pub(crate) fn make_clock(cfg: &AppConfig) -> (Arc<dyn Clock>, Option<Arc<ManualClock>>) {
    match cfg.run.clock {
        ClockKind::System => (Arc::new(SystemClock), None),
        ClockKind::Simulated => {
            let m = Arc::new(ManualClock::new(cfg.run.start_ms));
            (m.clone(), Some(m))
        }
    }
}

/// Starts every configured detector; on failure the ones already running are
/// stopped again.
pub(crate) fn start_detectors(cfg: &AppConfig) -> Result<Vec<SupervisedDetector>, AppError> {
    let mut out: Vec<SupervisedDetector> = Vec::new();
    for spec in &cfg.detectors {
        match SupervisedDetector::start(spec.clone(), cfg.run.restart.policy()) {
            Ok(d) => out.push(d),
            Err(e) => {
                for d in &mut out {
                    d.stop();
                }
                let diag = match &e {
                    crate::detector::DetectorError::Startup { diagnostics, .. } if !diagnostics.is_empty() => {
                        format!("\n--- detector output ---\n{diagnostics}")
                    }
                    _ => String::new(),
                };
                return Err(AppError::Startup(format!("{e}{diag}")));
            }
        }
    }
    Ok(out)
}

pub(crate) fn stop_detectors(detectors: &mut [SupervisedDetector]) {
    for d in detectors {
        d.stop();
        if d.faults() > 0 {
            warn!(detector = %d.id(), faults = d.faults(), restarts = d.restarts(), "detector fault summary");
        }
    }
}
