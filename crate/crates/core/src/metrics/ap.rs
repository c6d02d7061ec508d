use serde::{Deserialize, Serialize};

use crate::geometry::Detection;

use super::{greedy_assign, GroundTruthBox, MetricsError};

/// One point on the precision/recall curve: the result of keeping every
/// prediction whose confidence is at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall at every distinct confidence, highest threshold first.
///
/// Greedy matching visits predictions in descending confidence, so the match
/// set for the cut at `t` is exactly the prefix of the full matching.
pub fn pr_curve(
    preds: &[Detection],
    truths: &[GroundTruthBox],
    iou_thresh: f64,
) -> Result<Vec<PrPoint>, MetricsError> {
    let assignment = greedy_assign(preds, truths, iou_thresh)?;
    let n_truth = truths.len() as f64;

    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| preds[j].confidence.total_cmp(&preds[i].confidence));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (k, &p) in order.iter().enumerate() {
        if assignment[p].is_some() {
            tp += 1;
        } else {
            fp += 1;
        }
        let conf = preds[p].confidence;
        let last_of_group = order
            .get(k + 1)
            .is_none_or(|&next| preds[next].confidence != conf);
        if last_of_group {
            points.push(PrPoint {
                threshold: conf,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if n_truth > 0.0 { tp as f64 / n_truth } else { 0.0 },
            });
        }
    }
    Ok(points)
}

/// Area under the precision envelope, where the precision used at recall `r`
/// is the best precision reached at any recall `>= r` (all-point
/// interpolation).
pub fn average_precision(
    preds: &[Detection],
    truths: &[GroundTruthBox],
    iou_thresh: f64,
) -> Result<f64, MetricsError> {
    if truths.is_empty() {
        let class = preds
            .first()
            .map(|d| d.label.to_string())
            .unwrap_or_else(|| "<none>".into());
        return Err(MetricsError::UndefinedAp(class));
    }
    let curve = pr_curve(preds, truths, iou_thresh)?;

    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (pt, env) in curve.iter().zip(envelope) {
        ap += (pt.recall - prev_recall) * env;
        prev_recall = pt.recall;
    }
    Ok(ap.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, ClassLabel, DetectorId, FrameId};

    fn bx(x: f64) -> BBox {
        BBox::new(x, 0.1, x + 0.1, 0.3).unwrap()
    }
    fn pred(x: f64, conf: f64) -> Detection {
        Detection::new(
            bx(x),
            ClassLabel::new("boar").unwrap(),
            conf,
            DetectorId::new("m").unwrap(),
            FrameId::new("f").unwrap(),
        )
        .unwrap()
    }
    fn truth(x: f64) -> GroundTruthBox {
        GroundTruthBox {
            bbox: bx(x),
            label: ClassLabel::new("boar").unwrap(),
            frame_id: FrameId::new("f").unwrap(),
        }
    }

    #[test]
    fn perfect_ranking() {
        let truths = [truth(0.0), truth(0.3)];
        let preds = [pred(0.0, 0.9), pred(0.3, 0.8)];
        assert_eq!(average_precision(&preds, &truths, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn interleaved_false_positive() {
        // correct 0.9, wrong 0.8, correct 0.7 over two truths
        let truths = [truth(0.0), truth(0.3)];
        let preds = [pred(0.0, 0.9), pred(0.7, 0.8), pred(0.3, 0.7)];
        let curve = pr_curve(&preds, &truths, 0.5).unwrap();
        let pr: Vec<(f64, f64)> = curve.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pr[0], (1.0, 0.5));
        assert_eq!(pr[1], (0.5, 0.5));
        assert!((pr[2].0 - 2.0 / 3.0).abs() < 1e-12 && pr[2].1 == 1.0);
        let ap = average_precision(&preds, &truths, 0.5).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn no_predictions_scores_zero() {
        assert_eq!(average_precision(&[], &[truth(0.0)], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn undefined_without_truths() {
        assert!(matches!(
            average_precision(&[pred(0.0, 0.9)], &[], 0.5),
            Err(MetricsError::UndefinedAp(_))
        ));
    }

    #[test]
    fn tied_confidences_form_one_cut() {
        let truths = [truth(0.0), truth(0.3)];
        let preds = [pred(0.0, 0.8), pred(0.7, 0.8), pred(0.3, 0.8)];
        let curve = pr_curve(&preds, &truths, 0.5).unwrap();
        assert_eq!(curve.len(), 1);
        assert!((curve[0].precision - 2.0 / 3.0).abs() < 1e-12);
    }
}
