//! Decision logic: fused detections and operator commands in, alert and
//! deterrent actions out.
//!
//! [`step`], [`handle_command`] and [`shutdown`] are pure transition functions;
//! [`Engine`] wraps them with a clock, snapshot rendering and the action log.

mod annotate;
mod font;
mod log;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::clock::{Clock, Millis};
use crate::fusion::FusedResult;
use crate::geometry::{ClassLabel, Detection, FrameId};
use crate::ingestion::FrameRecord;

pub use annotate::{annotate_snapshot, caption, pixel_rect, AnnotateError};
pub use log::{read_action_log, ActionLog, InputRecord, LogRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Idle,
    Alerted,
    Deterring,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SentinelState {
    pub mode: Mode,
    pub last_alert_time: BTreeMap<ClassLabel, Millis>,
    pub active_classes: BTreeSet<ClassLabel>,
    pub absence_counter: u32,
}

fn default_cooldown() -> f64 {
    60.0
}
fn default_absence() -> u32 {
    5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Minimum seconds between two alerts for the same class. 0 alerts on
    /// every frame.
    #[serde(default = "default_cooldown")]
    pub alert_cooldown_s: f64,
    #[serde(default = "default_absence")]
    pub absence_frames_to_clear: u32,
    #[serde(default = "default_true")]
    pub annotate: bool,
    /// Start the deterrent on the first alert without waiting for `deter`.
    #[serde(default)]
    pub auto_deter: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            alert_cooldown_s: default_cooldown(),
            absence_frames_to_clear: default_absence(),
            annotate: true,
            auto_deter: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.alert_cooldown_s.is_finite() || self.alert_cooldown_s < 0.0 {
            return Err(format!("alert_cooldown_s must be >= 0, got {}", self.alert_cooldown_s));
        }
        if self.absence_frames_to_clear < 1 {
            return Err("absence_frames_to_clear must be >= 1".into());
        }
        Ok(())
    }

    fn cooldown_ms(&self) -> Millis {
        (self.alert_cooldown_s * 1000.0).round() as Millis
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    SendAlert {
        correlation_id: String,
        frame_id: FrameId,
        snapshot: PathBuf,
        classes: Vec<ClassLabel>,
        /// Highest confidence per alerted class.
        confidences: BTreeMap<ClassLabel, f64>,
        /// Set when annotation failed and the raw frame is sent instead.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotation_error: Option<String>,
    },
    StartDeterrent,
    StopDeterrent,
    /// Something the operator should hear about, e.g. a dead speaker.
    OperatorNotice { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Deter,
    Stop,
}

impl Verb {
    /// Case-insensitive, surrounding whitespace ignored.
    pub fn parse(text: &str) -> Option<Verb> {
        match text.trim().to_ascii_lowercase().as_str() {
            "deter" => Some(Verb::Deter),
            "stop" => Some(Verb::Stop),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub verb: Verb,
    /// Chat the command came from.
    pub issuer: i64,
    pub time: Millis,
}

/// How a command was received, for the reply to the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Started,
    AlreadyActive,
    Stopped,
    NotActive,
}

impl Ack {
    pub fn text(self) -> &'static str {
        match self {
            Ack::Started => "Deterrent sound started. Send 'stop' to end it.",
            Ack::AlreadyActive => "Deterrent sound is already playing.",
            Ack::Stopped => "Deterrent sound stopped.",
            Ack::NotActive => "Deterrent sound is not playing.",
        }
    }
}

/// Renders the alert snapshot for a frame; the error string is recorded in the
/// alert when rendering fails.
pub type Renderer<'a> = dyn FnMut(&FrameRecord, &[Detection]) -> Result<PathBuf, String> + 'a;

/// Per-frame transition.
pub fn step(
    state: &SentinelState,
    fused: &FusedResult,
    frame: &FrameRecord,
    now: Millis,
    cfg: &EngineConfig,
    render: &mut Renderer<'_>,
) -> (SentinelState, Vec<Action>) {
    let mut next = state.clone();
    let mut actions = Vec::new();

    if fused.is_empty() {
        next.absence_counter = next.absence_counter.saturating_add(1);
        if next.absence_counter >= cfg.absence_frames_to_clear {
            next.active_classes.clear();
            if next.mode == Mode::Alerted {
                next.mode = Mode::Idle;
            }
        }
        return (next, actions);
    }

    next.absence_counter = 0;
    next.active_classes.extend(fused.detected_classes.iter().cloned());
    if next.mode == Mode::Idle {
        next.mode = Mode::Alerted;
    }

    let cooldown = cfg.cooldown_ms();
    let due: Vec<ClassLabel> = fused
        .detected_classes
        .iter()
        .filter(|c| match state.last_alert_time.get(*c) {
            None => true,
            Some(&last) => now >= last && now - last >= cooldown,
        })
        .cloned()
        .collect();

    if !due.is_empty() {
        let best = fused.max_confidence_by_class();
        let (snapshot, annotation_error) = match render(frame, &fused.detections) {
            Ok(p) => (p, None),
            Err(e) => (frame.image_path.clone(), Some(e)),
        };
        for c in &due {
            next.last_alert_time.insert(c.clone(), now);
        }
        actions.push(Action::SendAlert {
            correlation_id: format!("alert-{}", frame.frame_id),
            frame_id: frame.frame_id.clone(),
            snapshot,
            confidences: due.iter().map(|c| (c.clone(), best[c])).collect(),
            classes: due,
            annotation_error,
        });
        if cfg.auto_deter && next.mode != Mode::Deterring {
            next.mode = Mode::Deterring;
            actions.push(Action::StartDeterrent);
        }
    }
    (next, actions)
}

pub fn handle_command(state: &SentinelState, cmd: &Command) -> (SentinelState, Vec<Action>, Ack) {
    let mut next = state.clone();
    match (cmd.verb, state.mode) {
        (Verb::Deter, Mode::Deterring) => (next, vec![], Ack::AlreadyActive),
        (Verb::Deter, _) => {
            next.mode = Mode::Deterring;
            (next, vec![Action::StartDeterrent], Ack::Started)
        }
        (Verb::Stop, Mode::Deterring) => {
            next.mode = resting_mode(state);
            (next, vec![Action::StopDeterrent], Ack::Stopped)
        }
        (Verb::Stop, _) => (next, vec![], Ack::NotActive),
    }
}

/// Final transition: a playing deterrent is stopped.
pub fn shutdown(state: &SentinelState) -> (SentinelState, Vec<Action>) {
    let mut next = state.clone();
    if state.mode == Mode::Deterring {
        next.mode = resting_mode(state);
        return (next, vec![Action::StopDeterrent]);
    }
    (next, vec![])
}

fn resting_mode(state: &SentinelState) -> Mode {
    if state.active_classes.is_empty() {
        Mode::Idle
    } else {
        Mode::Alerted
    }
}

/// Human-readable alert text, e.g.
/// `Intrusion alert: elephant (91%), boar (67%) at 2025-03-01T06:00:00Z [f004]`.
pub fn alert_text(action: &Action, now: Millis) -> Option<String> {
    let Action::SendAlert {
        frame_id,
        classes,
        confidences,
        ..
    } = action
    else {
        return None;
    };
    let parts: Vec<String> = classes
        .iter()
        .map(|c| format!("{c} ({:.0}%)", confidences[c] * 100.0))
        .collect();
    Some(format!(
        "Intrusion alert: {} at {} [{frame_id}]",
        parts.join(", "),
        crate::clock::format_utc(now)
    ))
}

/// The stateful wrapper used by the monitor loop.
pub struct Engine {
    state: SentinelState,
    cfg: EngineConfig,
    clock: Arc<dyn Clock>,
    snapshot_dir: PathBuf,
    log: Option<ActionLog>,
}

impl Engine {
    pub fn new(cfg: EngineConfig, clock: Arc<dyn Clock>, snapshot_dir: &Path, log: Option<ActionLog>) -> Self {
        Self {
            state: SentinelState::default(),
            cfg,
            clock,
            snapshot_dir: snapshot_dir.to_path_buf(),
            log,
        }
    }

    pub fn state(&self) -> &SentinelState {
        &self.state
    }

    pub fn on_frame(&mut self, fused: &FusedResult, frame: &FrameRecord) -> Vec<Action> {
        let now = self.clock.now_ms();
        let dir = self.snapshot_dir.clone();
        let annotate = self.cfg.annotate;
        let mut render = |f: &FrameRecord, dets: &[Detection]| {
            let dets = if annotate { dets } else { &[] };
            annotate_snapshot(&f.image_path, dets, &dir).map_err(|e| {
                warn!(frame = %f.frame_id, error = %e, "snapshot annotation failed; sending raw frame");
                e.to_string()
            })
        };
        let (next, actions) = step(&self.state, fused, frame, now, &self.cfg, &mut render);
        self.commit(
            now,
            InputRecord::Frame {
                frame_id: frame.frame_id.clone(),
                detections: fused.detections.len(),
                classes: fused.detected_classes.iter().cloned().collect(),
            },
            next,
            &actions,
        );
        actions
    }

    pub fn on_command(&mut self, cmd: &Command) -> (Vec<Action>, Ack) {
        let now = self.clock.now_ms();
        let (next, actions, ack) = handle_command(&self.state, cmd);
        info!(verb = ?cmd.verb, ?ack, "operator command");
        self.commit(
            now,
            InputRecord::Command {
                verb: cmd.verb,
                issuer: cmd.issuer,
                ack,
            },
            next,
            &actions,
        );
        (actions, ack)
    }

    /// Records an operator notice raised outside the engine (sink or detector
    /// failures) so it lands in the action log.
    pub fn on_notice(&mut self, message: &str) -> Vec<Action> {
        let now = self.clock.now_ms();
        let actions = vec![Action::OperatorNotice {
            message: message.to_string(),
        }];
        let state = self.state.clone();
        self.commit(now, InputRecord::Notice, state, &actions);
        actions
    }

    pub fn shutdown(&mut self) -> Vec<Action> {
        let now = self.clock.now_ms();
        let (next, actions) = shutdown(&self.state);
        self.commit(now, InputRecord::Shutdown, next, &actions);
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.flush() {
                warn!(error = %e, "action log flush failed");
            }
        }
        actions
    }

    fn commit(&mut self, now: Millis, input: InputRecord, next: SentinelState, actions: &[Action]) {
        self.state = next;
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.append(now, input, self.state.mode, actions) {
                warn!(error = %e, "action log write failed");
            }
        }
    }
}
