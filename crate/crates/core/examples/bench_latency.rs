//! Times two detectors with artificial delays of 100 and 150 ms, run one
//! after the other and then side by side.
//!
//!     cargo run --example bench_latency

use std::path::Path;

use sentinel::app::{render_bench_table, run_bench, ALL_GROUP, PIPELINE};
use sentinel::config::AppConfig;
use sentinel::detector::ExecutionMode;

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let work = std::env::temp_dir().join("sentinel-bench");
    let images = work.join("images");
    std::fs::create_dir_all(&images).unwrap();
    for i in 1..=10 {
        std::fs::copy(data.join("golden/frames/frame_01.png"), images.join(format!("b{i:02}.png"))).unwrap();
    }
    std::fs::write(work.join("classes.txt"), "boar\nelephant\nmonkey\n").unwrap();
    let empty = work.join("empty.txt");
    std::fs::write(&empty, "# no detections\n").unwrap();

    let mut cfg = AppConfig::load(&data.join("golden/config.toml")).unwrap();
    for (d, delay) in cfg.detectors.iter_mut().zip([100, 150]) {
        d.launch = empty.display().to_string();
        d.delay_ms = Some(delay);
    }
    cfg.eval.bench_json = work.join("bench.json");
    cfg.eval.bench_table = work.join("bench.txt");

    for mode in [ExecutionMode::Sequential, ExecutionMode::Parallel] {
        cfg.run.execution = mode;
        let r = run_bench(&cfg, &work).unwrap();
        println!("{}", render_bench_table(&r));
        let pipe = r.get(ALL_GROUP, PIPELINE).unwrap();
        println!("{mode:?} pipeline mean {:.1} ms\n", pipe.mean * 1e3);
    }
}
