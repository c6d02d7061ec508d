//! Dataset-level evaluation producing an [`EvalReport`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{ClassLabel, Detection, FrameId};

use super::{
    average_precision, confusion_from_trials, f1, latency_stats, match_frame, mean_ap,
    precision_recall, ConfusionMatrix, GroundTruthBox, LatencyStats, MatchOutcome, MetricsError,
    Outcome, Trial,
};

/// Predictions and annotations for one image.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub frame_id: FrameId,
    pub predictions: Vec<Detection>,
    pub truths: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone)]
pub struct EvalInput {
    /// Configured class list; fixes row order in the report.
    pub classes: Vec<ClassLabel>,
    pub frames: Vec<FrameEval>,
    pub iou_thresh: f64,
    /// Explicit recognition trials. When absent, one trial is derived per
    /// (image, annotated class) pair, see [`derive_trials`].
    pub trials: Option<Vec<Trial>>,
    /// Inference time samples in seconds, keyed by model name.
    pub latency: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassLabel,
    pub images: u64,
    pub instances: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: Option<f64>,
    pub ap: Option<f64>,
    pub f1: Option<f64>,
    /// Correct recognitions over trials.
    pub accuracy: Option<f64>,
    pub trials: u64,
    /// Mean displayed confidence of true positives.
    pub mean_tp_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_thresh: f64,
    pub classes: Vec<ClassMetrics>,
    /// Mean of the defined per-class AP values.
    pub map_value: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub latency: BTreeMap<String, LatencyStats>,
    /// Annotated classes missing from the configured class list, with their
    /// instance counts. They are excluded from every other figure.
    pub unconfigured_classes: BTreeMap<ClassLabel, u64>,
}

impl EvalReport {
    pub fn class(&self, c: &str) -> Option<&ClassMetrics> {
        let c = ClassLabel::new(c).ok()?;
        self.classes.iter().find(|m| m.class == c)
    }
}

/// One recognition trial per (image, annotated class): correct if any
/// prediction in the image carries that class, otherwise the label of the
/// most confident prediction, otherwise missed.
pub fn derive_trials(frames: &[FrameEval], classes: &[ClassLabel]) -> Vec<Trial> {
    let mut out = Vec::new();
    for f in frames {
        let actual: BTreeSet<&ClassLabel> = f
            .truths
            .iter()
            .map(|t| &t.label)
            .filter(|l| classes.contains(l))
            .collect();
        let top = f
            .predictions
            .iter()
            .filter(|d| classes.contains(&d.label))
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence));
        for c in actual {
            let predicted = if f.predictions.iter().any(|d| &d.label == c) {
                Outcome::Class(c.clone())
            } else {
                top.map_or(Outcome::Missed, |d| Outcome::Class(d.label.clone()))
            };
            out.push(Trial {
                actual: c.clone(),
                predicted,
            });
        }
    }
    out
}

pub fn evaluate(input: &EvalInput) -> Result<EvalReport, MetricsError> {
    let configured: BTreeSet<&ClassLabel> = input.classes.iter().collect();

    let mut unconfigured: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    for t in input.frames.iter().flat_map(|f| &f.truths) {
        if !configured.contains(&t.label) {
            *unconfigured.entry(t.label.clone()).or_default() += 1;
        }
    }

    let mut counts: BTreeMap<ClassLabel, MatchOutcome> = BTreeMap::new();
    let mut tp_conf: BTreeMap<ClassLabel, Vec<f64>> = BTreeMap::new();
    let mut images: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    for f in &input.frames {
        for (class, m) in match_frame(&f.predictions, &f.truths, input.iou_thresh)? {
            *counts.entry(class).or_default() += m;
        }
        let assignment = super::greedy_assign(&f.predictions, &f.truths, input.iou_thresh)?;
        for (d, a) in f.predictions.iter().zip(assignment) {
            if a.is_some() {
                tp_conf.entry(d.label.clone()).or_default().push(d.confidence);
            }
        }
        let present: BTreeSet<&ClassLabel> = f.truths.iter().map(|t| &t.label).collect();
        for c in present {
            *images.entry(c.clone()).or_default() += 1;
        }
    }

    let trials = match &input.trials {
        Some(t) => t.clone(),
        None => derive_trials(&input.frames, &input.classes),
    };
    let confusion = confusion_from_trials(&input.classes, &trials)?;

    let mut classes = Vec::with_capacity(input.classes.len());
    let mut aps = BTreeMap::new();
    for class in &input.classes {
        let m = counts.get(class).copied().unwrap_or_default();
        let (precision, recall) = match precision_recall(&m) {
            Ok((p, r)) => (p, Some(r)),
            Err(MetricsError::UndefinedRecall) => {
                let predicted = m.tp + m.fp;
                let p = if predicted == 0 {
                    1.0
                } else {
                    m.tp as f64 / predicted as f64
                };
                (p, None)
            }
            Err(e) => return Err(e),
        };

        let ap = if m.truths() > 0 {
            let preds: Vec<Detection> = input
                .frames
                .iter()
                .flat_map(|f| f.predictions.iter().filter(|d| &d.label == class).cloned())
                .collect();
            let truths: Vec<GroundTruthBox> = input
                .frames
                .iter()
                .flat_map(|f| f.truths.iter().filter(|t| &t.label == class).cloned())
                .collect();
            let v = average_precision(&preds, &truths, input.iou_thresh)?;
            aps.insert(class.clone(), v);
            Some(v)
        } else {
            None
        };

        let mean_tp_confidence = tp_conf
            .get(class)
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);

        classes.push(ClassMetrics {
            class: class.clone(),
            images: images.get(class).copied().unwrap_or(0),
            instances: m.truths(),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            precision,
            recall,
            ap,
            f1: recall.map(|r| f1(precision, r)),
            accuracy: confusion.accuracy(class),
            trials: confusion.row_total(class),
            mean_tp_confidence,
        });
    }

    let map_value = if aps.is_empty() {
        None
    } else {
        Some(mean_ap(&aps)?)
    };

    let mut latency = BTreeMap::new();
    for (model, samples) in &input.latency {
        if !samples.is_empty() {
            latency.insert(model.clone(), latency_stats(samples)?);
        }
    }

    Ok(EvalReport {
        iou_thresh: input.iou_thresh,
        classes,
        map_value,
        confusion,
        latency,
        unconfigured_classes: unconfigured,
    })
}
