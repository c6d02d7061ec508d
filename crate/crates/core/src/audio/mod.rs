//! Looping deterrent playback.
//!
//! The clip is decoded once at startup to prove it is playable. Playback runs
//! on its own thread and loops the clip through an [`AudioSink`] until stopped.

mod sink;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use symphonia::core::audio::SampleBuffer;
use symphonia::core::codecs::DecoderOptions;
use symphonia::core::errors::Error as SymError;
use symphonia::core::formats::FormatOptions;
use symphonia::core::io::MediaSourceStream;
use symphonia::core::meta::MetadataOptions;
use symphonia::core::probe::Hint;
use thiserror::Error;
use tracing::{info, warn};

pub use sink::{CommandSink, NullSink, SinkEvent, SinkEventKind};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sound file {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("audio device unavailable: {0}")]
    Device(String),
    #[error("playback failed: {0}")]
    Playback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkKind {
    #[default]
    Null,
    Command,
}

fn default_player() -> String {
    "aplay".into()
}
fn default_player_args() -> Vec<String> {
    vec!["-q".into(), "{path}".into()]
}
fn default_device_args() -> Vec<String> {
    vec!["-D".into(), "{device}".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterrentConfig {
    pub sound_path: PathBuf,
    #[serde(default)]
    pub gap_between_loops_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_device: Option<String>,
    #[serde(default)]
    pub sink: SinkKind,
    /// External player for the `command` sink; `{path}` is the clip.
    #[serde(default = "default_player")]
    pub player: String,
    #[serde(default = "default_player_args")]
    pub player_args: Vec<String>,
    /// Prepended to `player_args` when `output_device` is set; `{device}` is
    /// replaced by it.
    #[serde(default = "default_device_args")]
    pub device_args: Vec<String>,
}

impl DeterrentConfig {
    pub fn new(sound_path: impl Into<PathBuf>) -> Self {
        Self {
            sound_path: sound_path.into(),
            gap_between_loops_s: 0.0,
            output_device: None,
            sink: SinkKind::Null,
            player: default_player(),
            player_args: default_player_args(),
            device_args: default_device_args(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.gap_between_loops_s.is_finite() || self.gap_between_loops_s < 0.0 {
            return Err(format!("gap_between_loops_s must be >= 0, got {}", self.gap_between_loops_s));
        }
        if self.sink == SinkKind::Command && self.player.trim().is_empty() {
            return Err("player is empty".into());
        }
        Ok(())
    }

    pub fn make_sink(&self) -> Box<dyn AudioSink> {
        match self.sink {
            SinkKind::Null => Box::new(NullSink::new()),
            SinkKind::Command => {
                let mut args: Vec<String> = Vec::new();
                if let Some(dev) = &self.output_device {
                    args.extend(self.device_args.iter().map(|a| a.replace("{device}", dev)));
                }
                args.extend(self.player_args.iter().cloned());
                Box::new(CommandSink::new(&self.player, args))
            }
        }
    }
}

/// Properties of a decoded clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipInfo {
    pub sample_rate: u32,
    pub channels: usize,
    pub frames: u64,
}

impl ClipInfo {
    pub fn duration(&self) -> Duration {
        Duration::from_secs_f64(self.frames as f64 / self.sample_rate.max(1) as f64)
    }
}

/// Decodes the whole clip. Fails on missing, unsupported, corrupt or silent
/// (zero-length) files.
pub fn validate_sound(path: &Path) -> Result<ClipInfo, AudioError> {
    let err = |reason: String| AudioError::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mss = MediaSourceStream::new(Box::new(file), Default::default());
    let mut hint = Hint::new();
    if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
        hint.with_extension(ext);
    }
    let probed = symphonia::default::get_probe()
        .format(&hint, mss, &FormatOptions::default(), &MetadataOptions::default())
        .map_err(|e| err(e.to_string()))?;
    let mut format = probed.format;
    let track = format
        .default_track()
        .ok_or_else(|| err("no audio track".into()))?
        .clone();
    let mut decoder = symphonia::default::get_codecs()
        .make(&track.codec_params, &DecoderOptions::default())
        .map_err(|e| err(e.to_string()))?;

    let mut info = ClipInfo {
        sample_rate: track.codec_params.sample_rate.unwrap_or(0),
        channels: track.codec_params.channels.map(|c| c.count()).unwrap_or(0),
        frames: 0,
    };
    let mut buf: Option<SampleBuffer<f32>> = None;
    loop {
        let packet = match format.next_packet() {
            Ok(p) => p,
            Err(SymError::IoError(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(err(e.to_string())),
        };
        if packet.track_id() != track.id {
            continue;
        }
        let decoded = decoder.decode(&packet).map_err(|e| err(e.to_string()))?;
        let spec = *decoded.spec();
        info.sample_rate = spec.rate;
        info.channels = spec.channels.count();
        let b = buf.get_or_insert_with(|| SampleBuffer::new(decoded.capacity() as u64, spec));
        if b.capacity() < decoded.capacity() * spec.channels.count() {
            *b = SampleBuffer::new(decoded.capacity() as u64, spec);
        }
        b.copy_interleaved_ref(decoded);
        info.frames += (b.samples().len() / spec.channels.count().max(1)) as u64;
    }
    if info.frames == 0 || info.sample_rate == 0 {
        return Err(err("clip contains no audio".into()));
    }
    Ok(info)
}

/// Cooperative stop flag shared between the controller and the playback loop.
#[derive(Default)]
pub struct StopSignal {
    stopped: Mutex<bool>,
    cv: Condvar,
}

impl StopSignal {
    pub fn raise(&self) {
        *self.stopped.lock().expect("stop signal") = true;
        self.cv.notify_all();
    }

    pub fn is_raised(&self) -> bool {
        *self.stopped.lock().expect("stop signal")
    }

    /// Sleeps up to `d`; returns true as soon as the signal is raised.
    pub fn wait(&self, d: Duration) -> bool {
        let deadline = Instant::now() + d;
        let mut s = self.stopped.lock().expect("stop signal");
        while !*s {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            s = self.cv.wait_timeout(s, deadline - now).expect("stop signal").0;
        }
        true
    }
}

pub trait AudioSink: Send {
    /// Claims the output device.
    fn open(&mut self) -> Result<(), AudioError>;
    /// Plays the clip once, returning early once `stop` is raised.
    fn play_once(&mut self, clip: &Path, duration: Duration, stop: &StopSignal) -> Result<(), AudioError>;
    fn close(&mut self) {}
}

struct Playback {
    stop: Arc<StopSignal>,
    thread: JoinHandle<Box<dyn AudioSink>>,
}

/// Start/stop controller. Both operations are idempotent.
pub struct Deterrent {
    cfg: DeterrentConfig,
    clip: ClipInfo,
    sink: Option<Box<dyn AudioSink>>,
    active: Option<Playback>,
    failures: Arc<Mutex<Vec<String>>>,
}

impl Deterrent {
    /// Validates the clip eagerly.
    pub fn new(cfg: DeterrentConfig, sink: Box<dyn AudioSink>) -> Result<Self, AudioError> {
        let clip = validate_sound(&cfg.sound_path)?;
        info!(
            path = %cfg.sound_path.display(),
            seconds = clip.duration().as_secs_f64(),
            "deterrent clip validated"
        );
        Ok(Self {
            cfg,
            clip,
            sink: Some(sink),
            active: None,
            failures: Arc::default(),
        })
    }

    pub fn clip(&self) -> ClipInfo {
        self.clip
    }

    pub fn is_active(&self) -> bool {
        self.active.as_ref().is_some_and(|p| !p.thread.is_finished())
    }

    /// Playback errors raised on the loop thread since the last call.
    pub fn take_failures(&self) -> Vec<String> {
        std::mem::take(&mut *self.failures.lock().expect("failures"))
    }

    /// Begins looping. Returns `Ok(false)` if already playing.
    pub fn start(&mut self) -> Result<bool, AudioError> {
        if self.active.is_some() {
            if self.is_active() {
                return Ok(false);
            }
            // the loop died on its own; reclaim the sink before restarting
            self.stop();
        }
        let mut sink = self.sink.take().expect("sink present while idle");
        if let Err(e) = sink.open() {
            self.sink = Some(sink);
            return Err(e);
        }
        let stop = Arc::new(StopSignal::default());
        let signal = stop.clone();
        let clip = self.cfg.sound_path.clone();
        let duration = self.clip.duration();
        let gap = Duration::from_secs_f64(self.cfg.gap_between_loops_s);
        let failures = self.failures.clone();
        let thread = std::thread::Builder::new()
            .name("deterrent".into())
            .spawn(move || {
                while !signal.is_raised() {
                    if let Err(e) = sink.play_once(&clip, duration, &signal) {
                        warn!(error = %e, "deterrent playback failed");
                        failures.lock().expect("failures").push(e.to_string());
                        break;
                    }
                    if !gap.is_zero() && signal.wait(gap) {
                        break;
                    }
                }
                sink.close();
                sink
            })
            .map_err(|e| AudioError::Playback(e.to_string()))?;
        self.active = Some(Playback { stop, thread });
        info!("deterrent started");
        Ok(true)
    }

    /// Stops playback and waits for the loop to wind down. Returns false when
    /// nothing was playing.
    pub fn stop(&mut self) -> bool {
        let Some(p) = self.active.take() else {
            return false;
        };
        p.stop.raise();
        match p.thread.join() {
            Ok(sink) => self.sink = Some(sink),
            Err(_) => {
                warn!("deterrent thread panicked; falling back to a null sink");
                self.sink = Some(Box::new(NullSink::new()));
            }
        }
        info!("deterrent stopped");
        true
    }
}

impl Drop for Deterrent {
    fn drop(&mut self) {
        self.stop();
    }
}

/// 16-bit PCM mono WAV bytes; used to build test clips.
pub fn wav_bytes(sample_rate: u32, samples: &[i16]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}
