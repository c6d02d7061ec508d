//! Matching, precision/recall, the PR curve, AP and F1 on a small hand-made
//! case, then the confusion matrix of the checked-in trial log.
//!
//!     cargo run --example metrics_report

use std::path::Path;

use sentinel::geometry::{BBox, ClassLabel, Detection, DetectorId, FrameId};
use sentinel::metrics::{
    average_precision, confusion_from_trials, f1, match_frame, pr_curve, precision_recall, read_trial_log,
    GroundTruthBox, MatchOutcome,
};

fn bbox(x: f64, y: f64, s: f64) -> BBox {
    BBox::new(x, y, x + s, y + s).unwrap()
}

fn main() {
    let frame = FrameId::new("img01").unwrap();
    let boar = ClassLabel::new("boar").unwrap();
    let truths = vec![
        GroundTruthBox {
            bbox: bbox(0.1, 0.1, 0.2),
            label: boar.clone(),
            frame_id: frame.clone(),
        },
        GroundTruthBox {
            bbox: bbox(0.6, 0.6, 0.3),
            label: boar.clone(),
            frame_id: frame.clone(),
        },
    ];
    let pred = |conf: f64, b: BBox| {
        Detection::new(b, boar.clone(), conf, DetectorId::new("yolo").unwrap(), frame.clone()).unwrap()
    };
    // a hit, a miss, then the second hit
    let preds = vec![
        pred(0.9, bbox(0.1, 0.1, 0.2)),
        pred(0.8, bbox(0.4, 0.0, 0.1)),
        pred(0.7, bbox(0.62, 0.6, 0.28)),
    ];

    let per_class = match_frame(&preds, &truths, 0.5).unwrap();
    let m: MatchOutcome = per_class[&boar];
    let (p, r) = precision_recall(&m).unwrap();
    println!("TP {} FP {} FN {}  precision {p:.3} recall {r:.3} F1 {:.3}", m.tp, m.fp, m.fn_, f1(p, r));

    println!("\nthreshold  precision  recall");
    for pt in pr_curve(&preds, &truths, 0.5).unwrap() {
        println!("{:>9.2}  {:>9.3}  {:>6.3}", pt.threshold, pt.precision, pt.recall);
    }
    println!("AP@0.5 = {:.4}", average_precision(&preds, &truths, 0.5).unwrap());

    let log = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/trials.csv");
    let trials = read_trial_log(&log).unwrap();
    let classes: Vec<ClassLabel> = ["boar", "elephant", "monkey"]
        .iter()
        .map(|c| ClassLabel::new(c).unwrap())
        .collect();
    let cm = confusion_from_trials(&classes, &trials).unwrap();
    println!("\n{} recognition trials", trials.len());
    for c in &classes {
        println!("  {:<9} accuracy {:.2}", c.as_str(), cm.accuracy(c).unwrap());
    }
}
