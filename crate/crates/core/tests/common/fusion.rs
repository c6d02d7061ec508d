//! Generators and property checks for the fusion stage, shared by the
//! property suite and the acceptance run.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use sentinel::fusion::{filter_detections, fuse, FusionConfig};
use sentinel::geometry::{BBox, Detection, FrameId};

use super::det;

pub const LABELS: [&str; 5] = ["elephant", "boar", "monkey", "person", "dog"];

/// Confidences land on a 0.05 grid now and then so that exact-threshold
/// cases come up.
pub fn confidence() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..=1.0f64, (0u32..=20).prop_map(|k| k as f64 / 20.0)]
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..0.8f64, 0.0..0.8f64, 0.05..0.5f64, 0.05..0.5f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, (x + w).min(1.0), (y + h).min(1.0)).unwrap())
}

pub fn detections(src: &'static str) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0..LABELS.len(), confidence(), bbox()), 0..8).prop_map(move |v| {
        v.into_iter()
            .map(|(l, c, b)| det(src, "f001", LABELS[l], c, b))
            .collect()
    })
}

pub fn config() -> impl Strategy<Value = FusionConfig> {
    (
        prop::collection::btree_set(0..LABELS.len(), 1..=LABELS.len()),
        confidence(),
        0.1..0.9f64,
    )
        .prop_map(|(classes, t, d)| {
            let names: Vec<&str> = classes.into_iter().map(|i| LABELS[i]).collect();
            let mut c = FusionConfig::new(&names);
            c.conf_threshold = t;
            c.dedup_iou = d;
            c
        })
}

fn fid() -> FrameId {
    super::fid("f001")
}

fn without_dedup(cfg: &FusionConfig) -> FusionConfig {
    let mut off = cfg.clone();
    off.dedup_enabled = false;
    off
}

pub fn threshold_monotone(a: &[Detection], cfg: &FusionConfig, t2: f64) -> Result<(), TestCaseError> {
    let mut hi = cfg.clone();
    hi.conf_threshold = cfg.conf_threshold.max(t2);
    let low = filter_detections(a, cfg);
    let high = filter_detections(a, &hi);
    prop_assert!(high.len() <= low.len());
    prop_assert!(high.iter().all(|d| low.contains(d)));

    let fl = fuse(&fid(), a, &[], &without_dedup(cfg)).unwrap();
    let fh = fuse(&fid(), a, &[], &without_dedup(&hi)).unwrap();
    prop_assert!(fh.detected_classes.is_subset(&fl.detected_classes));
    Ok(())
}

pub fn filter_idempotent(a: &[Detection], cfg: &FusionConfig) -> Result<(), TestCaseError> {
    let once = filter_detections(a, cfg);
    prop_assert_eq!(filter_detections(&once, cfg), once);
    Ok(())
}

pub fn class_set_symmetric(a: &[Detection], b: &[Detection], cfg: &FusionConfig) -> Result<(), TestCaseError> {
    for c in [cfg.clone(), without_dedup(cfg)] {
        let ab = fuse(&fid(), a, b, &c).unwrap();
        let ba = fuse(&fid(), b, a, &c).unwrap();
        prop_assert_eq!(ab.detected_classes, ba.detected_classes);
    }
    Ok(())
}

pub fn nothing_invented(a: &[Detection], b: &[Detection], cfg: &FusionConfig) -> Result<(), TestCaseError> {
    let r = fuse(&fid(), a, b, cfg).unwrap();
    for d in &r.detections {
        prop_assert!(a.contains(d) || b.contains(d));
        prop_assert!(d.confidence >= cfg.conf_threshold);
        prop_assert!(cfg.allowed_classes.contains(&d.label));
    }
    let labels: BTreeSet<_> = r.detections.iter().map(|d| d.label.clone()).collect();
    prop_assert_eq!(labels, r.detected_classes);
    Ok(())
}

pub fn dedup_off_cardinality(a: &[Detection], b: &[Detection], cfg: &FusionConfig) -> Result<(), TestCaseError> {
    let off = without_dedup(cfg);
    let r = fuse(&fid(), a, b, &off).unwrap();
    let expected = filter_detections(a, &off).len() + filter_detections(b, &off).len();
    prop_assert_eq!(r.detections.len(), expected);
    Ok(())
}

pub fn dedup_keeps_classes(a: &[Detection], b: &[Detection], cfg: &FusionConfig) -> Result<(), TestCaseError> {
    let on = fuse(&fid(), a, b, cfg).unwrap();
    let all = fuse(&fid(), a, b, &without_dedup(cfg)).unwrap();
    prop_assert_eq!(on.detected_classes, all.detected_classes);
    prop_assert!(on.detections.len() <= all.detections.len());
    Ok(())
}
