//! Per-detector class/confidence filtering and the cross-model union.
//!
//! Each detector's output is filtered against the class allow-list and the
//! confidence threshold, then the survivors of all detectors are unioned into a
//! single [`FusedResult`]. Optional cross-source deduplication collapses
//! same-label boxes from different detectors that overlap by at least
//! `dedup_iou`, keeping the more confident one.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{label_set, ClassLabel, Detection, DetectorId, FrameId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("detection for frame {found} passed to fusion of frame {expected}")]
    FrameMismatch { expected: FrameId, found: FrameId },
    #[error("invalid fusion config: {0}")]
    Config(String),
}

fn default_threshold() -> f64 {
    0.5
}
fn default_dedup_iou() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub allowed_classes: BTreeSet<ClassLabel>,
    #[serde(default = "default_threshold")]
    pub conf_threshold: f64,
    #[serde(default = "default_dedup_iou")]
    pub dedup_iou: f64,
    #[serde(default = "default_true")]
    pub dedup_enabled: bool,
}

impl FusionConfig {
    pub fn new(classes: &[&str]) -> Self {
        Self {
            allowed_classes: classes
                .iter()
                .map(|c| ClassLabel::new(c).expect("valid class name"))
                .collect(),
            conf_threshold: default_threshold(),
            dedup_iou: default_dedup_iou(),
            dedup_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.allowed_classes.is_empty() {
            return Err(FusionError::Config("allowed_classes is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(FusionError::Config(format!(
                "conf_threshold {} outside [0, 1]",
                self.conf_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.dedup_iou) {
            return Err(FusionError::Config(format!(
                "dedup_iou {} outside [0, 1]",
                self.dedup_iou
            )));
        }
        Ok(())
    }

    /// The acceptance rule. A detection scoring exactly the threshold passes.
    pub fn accepts(&self, d: &Detection) -> bool {
        d.confidence >= self.conf_threshold && self.allowed_classes.contains(&d.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedResult {
    pub frame_id: FrameId,
    pub detections: Vec<Detection>,
    pub detected_classes: BTreeSet<ClassLabel>,
    /// Host-measured inference time per detector, in milliseconds.
    pub per_source_latency: BTreeMap<DetectorId, f64>,
}

impl FusedResult {
    pub fn empty(frame_id: FrameId) -> Self {
        Self {
            frame_id,
            detections: Vec::new(),
            detected_classes: BTreeSet::new(),
            per_source_latency: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Highest confidence seen for each detected class.
    pub fn max_confidence_by_class(&self) -> BTreeMap<ClassLabel, f64> {
        let mut out = BTreeMap::new();
        for d in &self.detections {
            let e = out.entry(d.label.clone()).or_insert(0.0_f64);
            *e = e.max(d.confidence);
        }
        out
    }
}

pub fn filter_detections(raw: &[Detection], cfg: &FusionConfig) -> Vec<Detection> {
    raw.iter().filter(|d| cfg.accepts(d)).cloned().collect()
}

/// Fuses two detectors' outputs. `dets_a` comes from the detector listed first
/// in configuration and wins confidence ties during deduplication.
pub fn fuse(
    frame_id: &FrameId,
    dets_a: &[Detection],
    dets_b: &[Detection],
    cfg: &FusionConfig,
) -> Result<FusedResult, FusionError> {
    fuse_many(frame_id, &[dets_a, dets_b], cfg)
}

/// Same as [`fuse`] for any number of sources, in configuration order.
pub fn fuse_many(
    frame_id: &FrameId,
    sources: &[&[Detection]],
    cfg: &FusionConfig,
) -> Result<FusedResult, FusionError> {
    for d in sources.iter().flat_map(|s| s.iter()) {
        if &d.frame_id != frame_id {
            return Err(FusionError::FrameMismatch {
                expected: frame_id.clone(),
                found: d.frame_id.clone(),
            });
        }
    }

    // (source rank, detection), in input order
    let candidates: Vec<(usize, Detection)> = sources
        .iter()
        .enumerate()
        .flat_map(|(rank, s)| filter_detections(s, cfg).into_iter().map(move |d| (rank, d)))
        .collect();

    let keep = if cfg.dedup_enabled {
        cross_source_dedup(&candidates, cfg.dedup_iou)
    } else {
        vec![true; candidates.len()]
    };

    let detections: Vec<Detection> = candidates
        .into_iter()
        .zip(keep)
        .filter_map(|((_, d), k)| k.then_some(d))
        .collect();
    let detected_classes = label_set(&detections);
    Ok(FusedResult {
        frame_id: frame_id.clone(),
        detections,
        detected_classes,
        per_source_latency: BTreeMap::new(),
    })
}

/// Greedy suppression over cross-source pairs only: visit candidates by
/// descending confidence (earlier source first on ties) and drop any candidate
/// that overlaps an already kept same-label box from another source.
fn cross_source_dedup(candidates: &[(usize, Detection)], min_iou: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        let (ri, di) = &candidates[i];
        let (rj, dj) = &candidates[j];
        dj.confidence
            .total_cmp(&di.confidence)
            .then(ri.cmp(rj))
            .then(i.cmp(&j))
    });

    let mut keep = vec![false; candidates.len()];
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let (rank, det) = &candidates[i];
        let suppressed = kept.iter().any(|&k| {
            let (krank, kdet) = &candidates[k];
            krank != rank && kdet.label == det.label && kdet.bbox.iou(&det.bbox) >= min_iou
        });
        if !suppressed {
            keep[i] = true;
            kept.push(i);
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn det(src: &str, label: &str, conf: f64, bx: (f64, f64, f64, f64)) -> Detection {
        Detection::new(
            BBox::new(bx.0, bx.1, bx.2, bx.3).unwrap(),
            ClassLabel::new(label).unwrap(),
            conf,
            DetectorId::new(src).unwrap(),
            FrameId::new("f001").unwrap(),
        )
        .unwrap()
    }

    fn cfg() -> FusionConfig {
        FusionConfig::new(&["elephant", "boar", "monkey"])
    }

    fn fid() -> FrameId {
        FrameId::new("f001").unwrap()
    }

    const B: (f64, f64, f64, f64) = (0.2, 0.2, 0.6, 0.7);

    #[test]
    fn filter_drops_unlisted_classes() {
        let raw = vec![det("ssd", "boar", 0.80, B), det("ssd", "person", 0.99, B)];
        let out = filter_detections(&raw, &cfg());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label.as_str(), "boar");
        assert!(filter_detections(&[], &cfg()).is_empty());
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let raw = vec![det("ssd", "monkey", 0.50, B), det("ssd", "monkey", 0.49, B)];
        let out = filter_detections(&raw, &cfg());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.50);
        // under a strict comparison the boundary detection would be dropped too
        let strict = raw.iter().filter(|d| d.confidence > 0.5).count();
        assert_eq!(strict, 0);
    }

    #[test]
    fn duplicate_across_models_keeps_max() {
        let r = fuse(
            &fid(),
            &[det("ssd", "elephant", 0.7, B)],
            &[det("yolo", "elephant", 0.9, B)],
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.detections.len(), 1);
        assert_eq!(r.detections[0].confidence, 0.9);
        assert_eq!(r.detections[0].source.as_str(), "yolo");
        assert_eq!(r.detected_classes.len(), 1);
    }

    #[test]
    fn union_with_empty() {
        let r = fuse(&fid(), &[], &[det("yolo", "boar", 0.92, B)], &cfg()).unwrap();
        assert_eq!(r.detections.len(), 1);
        assert!(r.detected_classes.contains(&ClassLabel::new("boar").unwrap()));
    }

    #[test]
    fn different_labels_never_dedup() {
        let left = (0.0, 0.2, 0.4, 0.8);
        let right = (0.5, 0.2, 0.9, 0.8);
        let r = fuse(
            &fid(),
            &[det("ssd", "boar", 0.6, left)],
            &[det("yolo", "monkey", 0.8, right)],
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.detections.len(), 2);
        assert_eq!(r.detected_classes.len(), 2);
        // even when the boxes coincide
        let r = fuse(
            &fid(),
            &[det("ssd", "boar", 0.6, B)],
            &[det("yolo", "monkey", 0.8, B)],
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.detections.len(), 2);
    }

    #[test]
    fn equal_confidence_prefers_first_source() {
        let r = fuse(
            &fid(),
            &[det("ssd", "boar", 0.8, B)],
            &[det("yolo", "boar", 0.8, B)],
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.detections.len(), 1);
        assert_eq!(r.detections[0].source.as_str(), "ssd");
    }

    #[test]
    fn same_source_overlaps_are_left_alone() {
        let r = fuse(
            &fid(),
            &[det("ssd", "boar", 0.8, B), det("ssd", "boar", 0.7, B)],
            &[],
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.detections.len(), 2);
    }

    #[test]
    fn dedup_off_keeps_both() {
        let mut c = cfg();
        c.dedup_enabled = false;
        let r = fuse(
            &fid(),
            &[det("ssd", "elephant", 0.7, B)],
            &[det("yolo", "elephant", 0.9, B)],
            &c,
        )
        .unwrap();
        assert_eq!(r.detections.len(), 2);
    }

    #[test]
    fn frame_mismatch_is_an_error() {
        let mut d = det("ssd", "boar", 0.8, B);
        d.frame_id = FrameId::new("f002").unwrap();
        assert!(matches!(
            fuse(&fid(), &[d], &[], &cfg()),
            Err(FusionError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.conf_threshold = 1.2;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.allowed_classes.clear();
        assert!(c.validate().is_err());
    }
}
