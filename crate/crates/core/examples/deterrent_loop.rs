//! Loops the deterrent clip until stopped. The null sink keeps time without a
//! sound card; pass `--speaker` to play through `aplay` instead.
//!
//!     cargo run --example deterrent_loop [-- --speaker]

use std::path::Path;
use std::time::{Duration, Instant};

use sentinel::audio::{Deterrent, DeterrentConfig, NullSink, SinkKind};

fn main() {
    let clip = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden/roar.wav");
    let mut cfg = DeterrentConfig::new(&clip);
    cfg.gap_between_loops_s = 0.1;

    let null = NullSink::new();
    let events = null.events();
    let sink = if std::env::args().any(|a| a == "--speaker") {
        cfg.sink = SinkKind::Command;
        cfg.make_sink()
    } else {
        Box::new(null)
    };

    let mut deterrent = Deterrent::new(cfg, sink).unwrap();
    println!("clip {:.2} s", deterrent.clip().duration().as_secs_f64());

    let t0 = Instant::now();
    println!("start -> {:?}", deterrent.start());
    println!("start again -> {:?}", deterrent.start());
    std::thread::sleep(Duration::from_millis(1200));
    println!("stop -> {}", deterrent.stop());
    println!("stop again -> {}", deterrent.stop());

    for e in events.lock().unwrap().iter() {
        println!("{:>6.0} ms  {:?}", e.at.duration_since(t0).as_secs_f64() * 1e3, e.kind);
    }
    for f in deterrent.take_failures() {
        println!("failure: {f}");
    }
}
