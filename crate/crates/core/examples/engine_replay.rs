//! Drives the alert/deterrent state machine by hand: frames with and without
//! animals, operator commands, and a shutdown, with every transition written
//! to an action log.
//!
//!     cargo run --example engine_replay

use std::path::Path;
use std::sync::Arc;

use sentinel::clock::{Clock, ManualClock};
use sentinel::engine::{read_action_log, ActionLog, Command, Engine, EngineConfig, Verb};
use sentinel::fusion::FusedResult;
use sentinel::geometry::{BBox, ClassLabel, Detection, DetectorId};
use sentinel::ingestion::{frame_id_for, FrameRecord, SourceKind};

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden/frames");
    let out = std::env::temp_dir().join("sentinel-engine-replay");
    std::fs::create_dir_all(&out).unwrap();

    let clock = Arc::new(ManualClock::new(1_740_808_800_000));
    let cfg = EngineConfig {
        alert_cooldown_s: 5.0,
        ..EngineConfig::default()
    };
    let log = ActionLog::create(&out.join("actions.jsonl")).unwrap();
    let mut engine = Engine::new(cfg, clock.clone(), &out, Some(log));

    // classes in view per frame; the boar comes back after its cooldown
    let script: [&[&str]; 8] = [&[], &["boar"], &["boar"], &["boar", "monkey"], &[], &[], &[], &["boar"]];
    for (i, classes) in script.iter().enumerate() {
        let seq = i as u64 + 1;
        let frame = FrameRecord {
            frame_id: frame_id_for(seq),
            seq,
            source_index: i as u64,
            timestamp: 0,
            image_path: data.join(format!("frame_{seq:02}.png")),
            source_kind: SourceKind::ImageDir,
            lease: None,
        };
        let mut fused = FusedResult::empty(frame.frame_id.clone());
        for c in *classes {
            let label = ClassLabel::new(c).unwrap();
            fused.detections.push(
                Detection::new(
                    BBox::new(0.2, 0.2, 0.6, 0.7).unwrap(),
                    label.clone(),
                    0.8,
                    DetectorId::new("ssd").unwrap(),
                    frame.frame_id.clone(),
                )
                .unwrap(),
            );
            fused.detected_classes.insert(label);
        }
        let actions = engine.on_frame(&fused, &frame);
        println!("{} {:?} -> {actions:?}", frame.frame_id, classes);

        if seq == 2 || seq == 6 {
            let verb = if seq == 2 { Verb::Deter } else { Verb::Stop };
            let cmd = Command {
                verb,
                issuer: 4242,
                time: clock.now_ms(),
            };
            let (actions, ack) = engine.on_command(&cmd);
            println!("   {verb:?} -> {actions:?} ({})", ack.text());
        }
        clock.advance(2000);
    }
    println!("shutdown -> {:?}", engine.shutdown());

    let records = read_action_log(&out.join("actions.jsonl")).unwrap();
    println!("\n{} records in {}", records.len(), out.join("actions.jsonl").display());
}
