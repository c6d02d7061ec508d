//! Two detectors see the same frame; fusion filters, merges and reports the
//! classes present.
//!
//!     cargo run --example iou_and_fusion

use sentinel::fusion::{fuse, FusionConfig};
use sentinel::geometry::{iou, BBox, ClassLabel, Detection, DetectorId, FrameId};

fn det(src: &str, class: &str, conf: f64, b: [f64; 4]) -> Detection {
    Detection::new(
        BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
        ClassLabel::new(class).unwrap(),
        conf,
        DetectorId::new(src).unwrap(),
        FrameId::new("f001").unwrap(),
    )
    .unwrap()
}

fn main() {
    let frame = FrameId::new("f001").unwrap();
    let ssd = vec![
        det("ssd", "elephant", 0.91, [0.10, 0.20, 0.50, 0.80]),
        det("ssd", "boar", 0.42, [0.60, 0.60, 0.80, 0.90]),
        det("ssd", "person", 0.88, [0.00, 0.00, 0.10, 0.30]),
    ];
    let yolo = vec![
        det("yolo", "elephant", 0.87, [0.12, 0.22, 0.52, 0.78]),
        det("yolo", "boar", 0.55, [0.61, 0.58, 0.82, 0.91]),
    ];

    println!(
        "elephant boxes overlap with IoU {:.3}",
        iou(&ssd[0].bbox, &yolo[0].bbox)
    );

    let mut cfg = FusionConfig::new(&["elephant", "boar", "monkey"]);
    cfg.conf_threshold = 0.5;
    for dedup in [false, true] {
        cfg.dedup_enabled = dedup;
        let r = fuse(&frame, &ssd, &yolo, &cfg).unwrap();
        println!("\ndedup {}: {} detections", if dedup { "on" } else { "off" }, r.detections.len());
        for d in &r.detections {
            println!("  {:<9} {:.2} from {}", d.label.as_str(), d.confidence, d.source.as_str());
        }
        let classes: Vec<&str> = r.detected_classes.iter().map(|c| c.as_str()).collect();
        println!("  classes present: {classes:?}");
    }
}
