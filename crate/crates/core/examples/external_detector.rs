//! Hosts a detector adapter as a child process and drives it over the line
//! protocol. The adapter here is the Python stub used by the test suite; any
//! program that speaks READY / INFER / DET / END works the same way.
//!
//!     cargo run --example external_detector

use std::path::Path;
use std::time::Duration;

use sentinel::detector::{infer_all, DetectorSpec, ExecutionMode, RestartPolicy, SupervisedDetector};
use sentinel::geometry::FrameId;

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let script = data.join("stub_adapter.py").display().to_string();
    let policy = RestartPolicy {
        max_restarts: 2,
        backoff: vec![Duration::from_millis(100)],
    };

    // the stub crashes on f003 and is restarted on the next request
    let spec = DetectorSpec::external("stub", "python3", &[&script, "--crash-on", "f003"]);
    let replay = DetectorSpec::fixture("replay", data.join("golden/ssd.txt"));
    let mut detectors = vec![
        SupervisedDetector::start(spec, policy.clone()).expect("python3 is needed for this example"),
        SupervisedDetector::start(replay, policy).unwrap(),
    ];

    for i in 1..=5 {
        let frame = FrameId::new(format!("f{i:03}")).unwrap();
        let image = data.join(format!("golden/frames/frame_{i:02}.png"));
        let out = infer_all(&mut detectors, &frame, &image, ExecutionMode::Parallel);
        for (d, r) in detectors.iter().zip(&out.results) {
            match r {
                Ok(r) => {
                    let labels: Vec<String> = r
                        .detections
                        .iter()
                        .map(|d| format!("{} {:.2}", d.label.as_str(), d.confidence))
                        .collect();
                    println!("{frame} {:<7} {:>6.1} ms  {labels:?}", d.id().as_str(), r.elapsed_ms);
                }
                Err(e) => println!("{frame} {:<7} fault: {e}", d.id().as_str()),
            }
        }
        // a frame interval longer than the restart backoff
        std::thread::sleep(Duration::from_millis(200));
    }
    for d in &mut detectors {
        println!("{}: {:?}, {} restarts", d.id().as_str(), d.health(), d.restarts());
        d.stop();
    }
}
