//! The full monitor loop on the checked-in scenario: twelve frames from a
//! directory, two replayed detectors, scripted chat commands, the null audio
//! sink and a simulated clock. Prints the summary and the action log.
//!
//!     cargo run --example monitor_golden

use std::path::Path;

use sentinel::app::{run_monitor, MonitorEnv};
use sentinel::config::AppConfig;

fn main() {
    tracing_subscriber::fmt().with_env_filter("warn").init();

    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden/config.toml");
    let mut cfg = AppConfig::load(&config).unwrap();
    cfg.run.output_dir = std::env::temp_dir().join("sentinel-monitor-golden");

    let s = run_monitor(&cfg, MonitorEnv::default()).unwrap();
    println!(
        "frames {}  alerts {}  commands {}  faults {:?}",
        s.frames, s.alerts, s.commands, s.detector_faults
    );
    println!("\n{}:", s.action_log.display());
    print!("{}", std::fs::read_to_string(&s.action_log).unwrap());
    if let Some(outbox) = s.outbox {
        println!("\n{}:", outbox.display());
        print!("{}", std::fs::read_to_string(outbox).unwrap());
    }
}
