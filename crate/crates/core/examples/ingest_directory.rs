//! Reads frames from an image directory with a manual clock, keeping every third.
//!
//!     cargo run --example ingest_directory [DIR]

use std::path::PathBuf;
use std::sync::Arc;

use sentinel::clock::{format_utc, ManualClock};
use sentinel::ingestion::{open_source, SourceConfig};

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden/frames")
    });
    let clock = Arc::new(ManualClock::new(1_740_808_800_000));
    let mut cfg = SourceConfig::new(dir.display().to_string());
    cfg.sample_every_n = 3;

    let mut source = open_source(&cfg, clock.clone()).unwrap();
    println!("source kind {:?}, every {}rd frame", source.kind(), cfg.sample_every_n);
    while let Some(f) = source.next_frame().unwrap() {
        println!(
            "{}  seq {:>2}  index {:>2}  {}  {}",
            f.frame_id,
            f.seq,
            f.source_index,
            format_utc(f.timestamp),
            f.image_path.file_name().unwrap().to_string_lossy()
        );
        clock.advance(1000);
    }
}
