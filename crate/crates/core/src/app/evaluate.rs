use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tracing::{info, warn};

use super::{start_detectors, stop_detectors, AppError};
use crate::config::AppConfig;
use crate::dataset::Dataset;
use crate::detector::{infer_all, DetectorSpec, Health};
use crate::fusion::fuse_many;
use crate::geometry::Detection;
use crate::metrics::report::{render_eval_table, write_json, write_text};
use crate::metrics::{evaluate, read_trial_log, EvalInput, EvalReport, FrameEval};

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub table: String,
    pub json_path: PathBuf,
    pub table_path: PathBuf,
}

/// Scores fused predictions against the dataset's labels. With `predictions`
/// set, that replay file stands in for the configured detectors.
///
/// Latency figures come from the times the detectors report, which keeps
/// reports from fixture runs reproducible; `bench` measures host-side time.
pub fn run_evaluate(cfg: &AppConfig, dataset: &Path, predictions: Option<&Path>) -> Result<EvalOutcome, AppError> {
    let ds = Dataset::open(dataset, cfg.eval.class_names.as_deref()).map_err(|e| AppError::Config(e.to_string()))?;
    let trials = match &cfg.eval.trial_log {
        Some(p) => Some(read_trial_log(p).map_err(|e| AppError::Config(e.to_string()))?),
        None => None,
    };

    let mut run_cfg = cfg.clone();
    if let Some(p) = predictions {
        run_cfg.detectors = vec![DetectorSpec::fixture("predictions", p)];
    }
    let mut detectors = start_detectors(&run_cfg)?;

    let mut frames = Vec::with_capacity(ds.samples.len());
    let mut latency: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &ds.samples {
        let inf = infer_all(&mut detectors, &s.frame_id, &s.image, cfg.run.execution);
        let mut per_source: Vec<Vec<Detection>> = Vec::with_capacity(detectors.len());
        for (d, r) in detectors.iter().zip(inf.results) {
            match r {
                Ok(res) => {
                    if let Some(ms) = res.reported_ms {
                        latency.entry(d.id().to_string()).or_default().push(ms / 1000.0);
                    }
                    per_source.push(res.detections);
                }
                Err(e) => {
                    warn!(frame = %s.frame_id, error = %e, "no predictions for frame");
                    per_source.push(Vec::new());
                }
            }
        }
        if detectors.iter().all(|d| d.health() == Health::Degraded) {
            stop_detectors(&mut detectors);
            return Err(AppError::Runtime("all detectors are offline".into()));
        }
        let refs: Vec<&[Detection]> = per_source.iter().map(Vec::as_slice).collect();
        let fused = fuse_many(&s.frame_id, &refs, &cfg.fusion).map_err(|e| AppError::Runtime(e.to_string()))?;
        frames.push(FrameEval {
            frame_id: s.frame_id.clone(),
            predictions: fused.detections,
            truths: s.truths.clone(),
        });
    }
    stop_detectors(&mut detectors);

    let input = EvalInput {
        classes: cfg.fusion.allowed_classes.iter().cloned().collect(),
        frames,
        iou_thresh: cfg.eval.iou_thresh,
        trials,
        latency,
    };
    let report = evaluate(&input).map_err(|e| AppError::Runtime(e.to_string()))?;
    let table = render_eval_table(&report);
    let io = |p: &Path, e: std::io::Error| AppError::Runtime(format!("{}: {e}", p.display()));
    write_json(&cfg.eval.report_json, &report).map_err(|e| io(&cfg.eval.report_json, e))?;
    write_text(&cfg.eval.report_table, &table).map_err(|e| io(&cfg.eval.report_table, e))?;
    info!(
        images = ds.samples.len(),
        map = ?report.map_value,
        json = %cfg.eval.report_json.display(),
        "evaluation written"
    );
    Ok(EvalOutcome {
        report,
        table,
        json_path: cfg.eval.report_json.clone(),
        table_path: cfg.eval.report_table.clone(),
    })
}
