//! Scores the replayed detectors on the small annotated dataset under
//! `tests/data/eval` and prints the report table.
//!
//!     cargo run --example evaluate_dataset [DATASET_DIR]

use std::path::{Path, PathBuf};

use sentinel::app::run_evaluate;
use sentinel::config::AppConfig;

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/eval");
    let dataset = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| data.clone());

    let mut cfg = AppConfig::load(&data.join("config.toml")).unwrap();
    let out = std::env::temp_dir().join("sentinel-evaluate");
    std::fs::create_dir_all(&out).unwrap();
    cfg.eval.report_json = out.join("eval.json");
    cfg.eval.report_table = out.join("eval.txt");

    let r = run_evaluate(&cfg, &dataset, None).unwrap();
    println!("{}", r.table);
    println!("written to {} and {}", r.json_path.display(), r.table_path.display());
}
