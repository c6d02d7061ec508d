use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{start_detectors, stop_detectors, AppError};
use crate::config::AppConfig;
use crate::dataset::Dataset;
use crate::detector::{infer_all, ExecutionMode};
use crate::metrics::report::{render_latency_rows, write_json, write_text};
use crate::metrics::{latency_stats, LatencyStats};

/// Rows are grouped by the classes annotated in each image; every image also
/// counts towards the `all` group.
pub const ALL_GROUP: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub group: String,
    /// A detector id, or `pipeline` for the whole per-frame step.
    pub model: String,
    /// Seconds.
    pub stats: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub execution: ExecutionMode,
    pub frames: usize,
    pub models: Vec<String>,
    pub rows: Vec<BenchRow>,
    pub faults: BTreeMap<String, u64>,
}

impl BenchReport {
    pub fn get(&self, group: &str, model: &str) -> Option<&LatencyStats> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.model == model)
            .map(|r| &r.stats)
    }
}

pub const PIPELINE: &str = "pipeline";

/// Host-measured inference time of every detector and of the combined step,
/// one pass over the dataset images.
pub fn run_bench(cfg: &AppConfig, dataset: &Path) -> Result<BenchReport, AppError> {
    let ds = Dataset::open(dataset, cfg.eval.class_names.as_deref()).map_err(|e| AppError::Config(e.to_string()))?;
    let mut detectors = start_detectors(cfg)?;
    let models: Vec<String> = detectors
        .iter()
        .map(|d| d.id().to_string())
        .chain(std::iter::once(PIPELINE.to_string()))
        .collect();

    // (group, model) -> samples in seconds
    let mut samples: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for s in &ds.samples {
        let groups: BTreeSet<String> = std::iter::once(ALL_GROUP.to_string())
            .chain(s.truths.iter().map(|t| t.label.to_string()))
            .collect();
        let inf = infer_all(&mut detectors, &s.frame_id, &s.image, cfg.run.execution);
        let mut record = |model: &str, secs: f64| {
            for g in &groups {
                samples.entry((g.clone(), model.to_string())).or_default().push(secs);
            }
        };
        for (d, r) in detectors.iter().zip(&inf.results) {
            match r {
                Ok(res) => record(d.id().as_str(), res.elapsed_ms / 1000.0),
                Err(e) => warn!(frame = %s.frame_id, error = %e, "bench sample dropped"),
            }
        }
        if inf.results.iter().all(Result::is_ok) {
            record(PIPELINE, inf.pipeline_ms / 1000.0);
        }
    }
    let faults = detectors.iter().map(|d| (d.id().to_string(), d.faults())).collect();
    stop_detectors(&mut detectors);

    let mut rows = Vec::new();
    for ((group, model), v) in &samples {
        rows.push(BenchRow {
            group: group.clone(),
            model: model.clone(),
            stats: latency_stats(v).map_err(|e| AppError::Runtime(e.to_string()))?,
        });
    }
    // `all` first, then classes alphabetically; models in configuration order
    rows.sort_by_key(|r| {
        (
            r.group != ALL_GROUP,
            r.group.clone(),
            models.iter().position(|m| *m == r.model),
        )
    });
    let report = BenchReport {
        execution: cfg.run.execution,
        frames: ds.samples.len(),
        models,
        rows,
        faults,
    };
    let io = |p: &Path, e: std::io::Error| AppError::Runtime(format!("{}: {e}", p.display()));
    write_json(&cfg.eval.bench_json, &report).map_err(|e| io(&cfg.eval.bench_json, e))?;
    write_text(&cfg.eval.bench_table, &render_bench_table(&report)).map_err(|e| io(&cfg.eval.bench_table, e))?;
    info!(frames = report.frames, json = %cfg.eval.bench_json.display(), "benchmark written");
    Ok(report)
}

/// Mean seconds per class and model, followed by the full statistics.
pub fn render_bench_table(r: &BenchReport) -> String {
    let mut s = String::new();
    let mode = match r.execution {
        ExecutionMode::Sequential => "sequential",
        ExecutionMode::Parallel => "parallel",
    };
    let _ = writeln!(s, "Inference time (s) of each model, {} frames, {mode} execution", r.frames);
    let _ = write!(s, "{:<12}", "Class");
    for m in &r.models {
        let _ = write!(s, " {m:>12}");
    }
    let _ = writeln!(s);
    let groups: Vec<&String> = {
        let mut g: Vec<&String> = Vec::new();
        for row in &r.rows {
            if !g.contains(&&row.group) {
                g.push(&row.group);
            }
        }
        g
    };
    for g in groups {
        let _ = write!(s, "{g:<12}");
        for m in &r.models {
            match r.get(g, m) {
                Some(st) => {
                    let _ = write!(s, " {:>12.3}", st.mean);
                }
                None => {
                    let _ = write!(s, " {:>12}", "-");
                }
            }
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let labels: Vec<String> = r.rows.iter().map(|row| format!("{}/{}", row.group, row.model)).collect();
    s.push_str(&render_latency_rows(labels.iter().map(String::as_str).zip(r.rows.iter().map(|row| &row.stats))));
    s
}
