//! Dual-detector wildlife intrusion monitoring.
//!
//! Frames from a camera, video file or image directory go through two object
//! detectors hosted out of process; their filtered detections are fused, fed to
//! an alert/deterrent state machine, and turned into Telegram alerts and a
//! looping deterrent sound. The same pieces drive an offline evaluation
//! toolkit (precision, recall, AP, mAP, F1, confusion matrix) and a latency
//! benchmark.
//!
//! Start with [`app::run_monitor`], [`app::run_evaluate`] and
//! [`app::run_bench`], or the runnable programs under `examples/`.

pub mod app;
pub mod audio;
pub mod clock;
pub mod config;
pub mod dataset;
pub mod detector;
pub mod engine;
pub mod fusion;
pub mod geometry;
pub mod ingestion;
pub mod metrics;
pub mod telegram;
