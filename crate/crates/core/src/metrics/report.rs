//! Report emission: a plain-text table for people and pretty JSON for
//! machines. Only the JSON form is stable; table spacing may change.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{EvalReport, LatencyStats, Outcome};

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn render_eval_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Detection metrics (IoU >= {:.2})", r.iou_thresh);
    let _ = writeln!(
        s,
        "{:<12} {:>7} {:>9} {:>9} {:>7} {:>7} {:>7}",
        "Class", "Images", "Instances", "Precision", "Recall", "AP", "F1"
    );
    for c in &r.classes {
        let _ = writeln!(
            s,
            "{:<12} {:>7} {:>9} {:>9.3} {:>7} {:>7} {:>7}",
            c.class.as_str(),
            c.images,
            c.instances,
            c.precision,
            opt(c.recall, 3),
            opt(c.ap, 3),
            opt(c.f1, 3),
        );
    }
    let _ = writeln!(s, "mAP: {}", opt(r.map_value, 4));

    let _ = writeln!(s, "\nMean confidence of true positives (%)");
    for c in &r.classes {
        let _ = writeln!(
            s,
            "{:<12} {:>7}",
            c.class.as_str(),
            opt(c.mean_tp_confidence.map(|v| v * 100.0), 1)
        );
    }

    let _ = writeln!(s, "\nRecognition trials");
    let _ = writeln!(s, "{:<12} {:>8} {:>7}", "Class", "Accuracy", "Trials");
    for c in &r.classes {
        let _ = writeln!(s, "{:<12} {:>8} {:>7}", c.class.as_str(), opt(c.accuracy, 2), c.trials);
    }

    let _ = writeln!(s, "\nConfusion matrix (rows actual, columns predicted)");
    let _ = write!(s, "{:<12}", "");
    for c in &r.confusion.classes {
        let _ = write!(s, " {:>9}", c.as_str());
    }
    let _ = writeln!(s, " {:>9}", Outcome::Missed.to_string());
    for (c, row) in r.confusion.classes.iter().zip(&r.confusion.counts) {
        let _ = write!(s, "{:<12}", c.as_str());
        for n in row {
            let _ = write!(s, " {n:>9}");
        }
        let _ = writeln!(s);
    }

    if !r.latency.is_empty() {
        let _ = writeln!(s, "\nInference time (s)");
        s.push_str(&render_latency_rows(r.latency.iter().map(|(k, v)| (k.as_str(), v))));
    }

    if !r.unconfigured_classes.is_empty() {
        let _ = writeln!(s, "\nAnnotated classes not in the configured class list:");
        for (c, n) in &r.unconfigured_classes {
            let _ = writeln!(s, "  {c}: {n} instances");
        }
    }
    s
}

pub fn render_latency_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a LatencyStats)>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>6} {:>9} {:>9} {:>9} {:>9}",
        "Model", "Count", "Mean", "Min", "Max", "StdDev"
    );
    for (name, l) in rows {
        let _ = writeln!(
            s,
            "{:<28} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            name, l.count, l.mean, l.min, l.max, l.std_dev
        );
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, to_json(value))
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}
