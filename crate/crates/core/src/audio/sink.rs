use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{AudioError, AudioSink, StopSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkEventKind {
    Open,
    LoopBegin,
    LoopEnd,
    /// The clip was cut short by a stop.
    Interrupted,
    Close,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkEvent {
    pub kind: SinkEventKind,
    pub at: Instant,
}

/// Plays nothing: waits out the clip duration and records what happened.
pub struct NullSink {
    events: Arc<Mutex<Vec<SinkEvent>>>,
    available: bool,
}

impl NullSink {
    pub fn new() -> Self {
        Self {
            events: Arc::default(),
            available: true,
        }
    }

    /// A sink whose device can never be opened.
    pub fn unavailable() -> Self {
        Self {
            available: false,
            ..Self::new()
        }
    }

    pub fn events(&self) -> Arc<Mutex<Vec<SinkEvent>>> {
        self.events.clone()
    }

    fn push(&self, kind: SinkEventKind) {
        self.events.lock().expect("sink events").push(SinkEvent {
            kind,
            at: Instant::now(),
        });
    }
}

impl Default for NullSink {
    fn default() -> Self {
        Self::new()
    }
}

impl AudioSink for NullSink {
    fn open(&mut self) -> Result<(), AudioError> {
        if !self.available {
            return Err(AudioError::Device("null sink configured as unavailable".into()));
        }
        self.push(SinkEventKind::Open);
        Ok(())
    }

    fn play_once(&mut self, _clip: &Path, duration: Duration, stop: &StopSignal) -> Result<(), AudioError> {
        self.push(SinkEventKind::LoopBegin);
        if stop.wait(duration) {
            self.push(SinkEventKind::Interrupted);
        } else {
            self.push(SinkEventKind::LoopEnd);
        }
        Ok(())
    }

    fn close(&mut self) {
        self.push(SinkEventKind::Close);
    }
}

/// Runs an external player once per loop, e.g. `aplay -q {path}`.
pub struct CommandSink {
    program: String,
    args: Vec<String>,
}

impl CommandSink {
    pub fn new(program: &str, args: Vec<String>) -> Self {
        Self {
            program: program.to_string(),
            args,
        }
    }

    fn resolve(&self) -> Option<PathBuf> {
        let p = Path::new(&self.program);
        if p.components().count() > 1 {
            return p.is_file().then(|| p.to_path_buf());
        }
        std::env::var_os("PATH").and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|d| d.join(&self.program))
                .find(|c| c.is_file())
        })
    }
}

impl AudioSink for CommandSink {
    fn open(&mut self) -> Result<(), AudioError> {
        self.resolve()
            .map(|_| ())
            .ok_or_else(|| AudioError::Device(format!("player {:?} not found", self.program)))
    }

    fn play_once(&mut self, clip: &Path, _duration: Duration, stop: &StopSignal) -> Result<(), AudioError> {
        let clip = clip.display().to_string();
        let args: Vec<String> = self.args.iter().map(|a| a.replace("{path}", &clip)).collect();
        let mut child = Command::new(&self.program)
            .args(&args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| AudioError::Device(format!("cannot run {:?}: {e}", self.program)))?;
        loop {
            if let Some(status) = child.try_wait().map_err(|e| AudioError::Playback(e.to_string()))? {
                if status.success() {
                    return Ok(());
                }
                let mut msg = String::new();
                if let Some(mut err) = child.stderr.take() {
                    use std::io::Read;
                    let _ = err.read_to_string(&mut msg);
                }
                return Err(AudioError::Playback(format!("{} exited with {status}: {}", self.program, msg.trim())));
            }
            if stop.wait(Duration::from_millis(20)) {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(());
            }
        }
    }
}
