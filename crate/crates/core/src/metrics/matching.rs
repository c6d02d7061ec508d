use std::collections::BTreeMap;

use crate::geometry::{ClassLabel, Detection};

use super::{GroundTruthBox, MatchOutcome, MetricsError};

/// Greedy one-to-one assignment of predictions to ground truth.
///
/// Predictions are visited by descending confidence (input order on ties).
/// Each takes the still-unmatched truth of the same label with the highest
/// IoU, provided that IoU reaches `iou_thresh`; IoU ties go to the lower truth
/// index. Returns, per prediction in input order, the index of the matched
/// truth.
pub fn greedy_assign(
    preds: &[Detection],
    truths: &[GroundTruthBox],
    iou_thresh: f64,
) -> Result<Vec<Option<usize>>, MetricsError> {
    if !(0.0..=1.0).contains(&iou_thresh) {
        return Err(MetricsError::IouThreshold(iou_thresh));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| preds[j].confidence.total_cmp(&preds[i].confidence));

    let mut taken = vec![false; truths.len()];
    let mut assignment = vec![None; preds.len()];
    for p in order {
        let pred = &preds[p];
        let mut best: Option<(usize, f64)> = None;
        for (t, truth) in truths.iter().enumerate() {
            if taken[t] || truth.label != pred.label || truth.frame_id != pred.frame_id {
                continue;
            }
            let v = pred.bbox.iou(&truth.bbox);
            if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        if let Some((t, _)) = best {
            taken[t] = true;
            assignment[p] = Some(t);
        }
    }
    Ok(assignment)
}

/// Per-class TP/FP/FN for one frame. Every class appearing in either list gets
/// an entry.
pub fn match_frame(
    preds: &[Detection],
    truths: &[GroundTruthBox],
    iou_thresh: f64,
) -> Result<BTreeMap<ClassLabel, MatchOutcome>, MetricsError> {
    let assignment = greedy_assign(preds, truths, iou_thresh)?;
    let mut out: BTreeMap<ClassLabel, MatchOutcome> = BTreeMap::new();
    let mut matched_truth = vec![false; truths.len()];
    for (pred, a) in preds.iter().zip(&assignment) {
        let e = out.entry(pred.label.clone()).or_default();
        match a {
            Some(t) => {
                e.tp += 1;
                matched_truth[*t] = true;
            }
            None => e.fp += 1,
        }
    }
    for (truth, matched) in truths.iter().zip(matched_truth) {
        let e = out.entry(truth.label.clone()).or_default();
        if !matched {
            e.fn_ += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, DetectorId, FrameId};

    fn bx(v: (f64, f64, f64, f64)) -> BBox {
        BBox::new(v.0, v.1, v.2, v.3).unwrap()
    }
    fn pred(label: &str, conf: f64, b: (f64, f64, f64, f64)) -> Detection {
        Detection::new(
            bx(b),
            ClassLabel::new(label).unwrap(),
            conf,
            DetectorId::new("m").unwrap(),
            FrameId::new("f").unwrap(),
        )
        .unwrap()
    }
    fn truth(label: &str, b: (f64, f64, f64, f64)) -> GroundTruthBox {
        GroundTruthBox {
            bbox: bx(b),
            label: ClassLabel::new(label).unwrap(),
            frame_id: FrameId::new("f").unwrap(),
        }
    }
    fn outcome(map: &BTreeMap<ClassLabel, MatchOutcome>, c: &str) -> MatchOutcome {
        map.get(&ClassLabel::new(c).unwrap()).copied().unwrap_or_default()
    }

    const A: (f64, f64, f64, f64) = (0.1, 0.1, 0.5, 0.5);

    #[test]
    fn perfect_match() {
        let r = match_frame(&[pred("boar", 0.9, A)], &[truth("boar", A)], 0.5).unwrap();
        assert_eq!(outcome(&r, "boar"), MatchOutcome { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn two_predictions_one_truth() {
        let r = match_frame(
            &[pred("boar", 0.9, A), pred("boar", 0.8, (0.12, 0.1, 0.5, 0.5))],
            &[truth("boar", A)],
            0.5,
        )
        .unwrap();
        assert_eq!(outcome(&r, "boar"), MatchOutcome { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn label_mismatch_never_matches() {
        let r = match_frame(
            &[pred("boar", 0.9, A)],
            &[truth("monkey", (0.1, 0.1, 0.5, 0.48))],
            0.5,
        )
        .unwrap();
        assert_eq!(outcome(&r, "boar"), MatchOutcome { tp: 0, fp: 1, fn_: 0 });
        assert_eq!(outcome(&r, "monkey"), MatchOutcome { tp: 0, fp: 0, fn_: 1 });
    }

    #[test]
    fn higher_confidence_claims_first() {
        let preds = [pred("boar", 0.6, A), pred("boar", 0.9, (0.1, 0.1, 0.45, 0.5))];
        let a = greedy_assign(&preds, &[truth("boar", A)], 0.5).unwrap();
        assert_eq!(a, vec![None, Some(0)]);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(matches!(
            match_frame(&[], &[], 1.5),
            Err(MetricsError::IouThreshold(_))
        ));
    }
}
