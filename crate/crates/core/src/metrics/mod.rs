//! Detection evaluation: IoU matching, precision/recall, average precision,
//! mAP, F1, trial accuracy with a confusion matrix, and latency statistics.

mod ap;
mod confusion;
mod eval;
mod latency;
mod matching;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, ClassLabel, FrameId};

pub use ap::{average_precision, pr_curve, PrPoint};
pub use confusion::{confusion_from_trials, read_trial_log, ConfusionMatrix, Outcome, Trial};
pub use eval::{derive_trials, evaluate, ClassMetrics, EvalInput, EvalReport, FrameEval};
pub use latency::{latency_stats, LatencyStats};
pub use matching::{greedy_assign, match_frame};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("IoU threshold {0} outside [0, 1]")]
    IouThreshold(f64),
    #[error("average precision is undefined for class {0}: no ground-truth instances")]
    UndefinedAp(String),
    #[error("recall is undefined: no ground-truth instances")]
    UndefinedRecall,
    #[error("mean AP of an empty class set")]
    EmptyClassSet,
    #[error("latency statistics need at least one sample")]
    NoSamples,
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
    #[error("trial log {path}:{line}: {msg}")]
    TrialLog {
        path: String,
        line: u64,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An annotated object a prediction is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub label: ClassLabel,
    pub frame_id: FrameId,
}

/// True/false positive and false negative counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MatchOutcome {
    pub fn truths(&self) -> u64 {
        self.tp + self.fn_
    }
}

impl std::ops::AddAssign for MatchOutcome {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// `P = tp / (tp + fp)` and `R = tp / (tp + fn)`.
///
/// A class with no predictions has precision 1.0 (nothing claimed, nothing
/// wrong). Recall without any ground truth is undefined and reported as an
/// error.
pub fn precision_recall(m: &MatchOutcome) -> Result<(f64, f64), MetricsError> {
    if m.truths() == 0 {
        return Err(MetricsError::UndefinedRecall);
    }
    let predicted = m.tp + m.fp;
    let precision = if predicted == 0 {
        1.0
    } else {
        m.tp as f64 / predicted as f64
    };
    Ok((precision, m.tp as f64 / m.truths() as f64))
}

/// Harmonic mean of precision and recall; `f1(0, 0) = 0`.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let s = precision + recall;
    if s == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / s
    }
}

/// Arithmetic mean of per-class AP values.
pub fn mean_ap(per_class_ap: &BTreeMap<ClassLabel, f64>) -> Result<f64, MetricsError> {
    let mut values = per_class_ap.values().copied();
    let first = values.next().ok_or(MetricsError::EmptyClassSet)?;
    // accumulate offsets from the first value so identical inputs come back exactly
    let n = per_class_ap.len() as f64;
    let offset: f64 = values.map(|v| v - first).sum();
    Ok(first + offset / n)
}
