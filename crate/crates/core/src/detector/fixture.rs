//! Replay detector serving pre-recorded detections.
//!
//! The replay file uses the adapter line grammar grouped under frame headers:
//!
//! ```text
//! FRAME f001
//! DET f001 boar 0.800000 0.100000 0.200000 0.400000 0.800000
//! END f001 9300
//! FRAME f002
//! ERR f002 simulated failure
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. A frame absent from
//! the file replays as an empty result with zero reported time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::geometry::{DetectorId, FrameId};

use super::protocol::{AdapterMessage, WireDetection};
use super::{Detector, DetectorError, InferenceResult};

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayFrame {
    Ok {
        detections: Vec<WireDetection>,
        elapsed_ms: f64,
    },
    Err(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayFile {
    pub frames: BTreeMap<FrameId, ReplayFrame>,
}

impl ReplayFile {
    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        let text = std::fs::read_to_string(path).map_err(|e| DetectorError::Startup {
            detector: path.display().to_string(),
            reason: format!("cannot read replay file: {e}"),
            diagnostics: String::new(),
        })?;
        Self::parse(&text).map_err(|(line, reason)| DetectorError::Startup {
            detector: path.display().to_string(),
            reason: format!("line {line}: {reason}"),
            diagnostics: String::new(),
        })
    }

    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut frames = BTreeMap::new();
        let mut current: Option<(FrameId, Vec<WireDetection>, Option<ReplayFrame>)> = None;

        fn close(
            frames: &mut BTreeMap<FrameId, ReplayFrame>,
            cur: Option<(FrameId, Vec<WireDetection>, Option<ReplayFrame>)>,
            line: usize,
        ) -> Result<(), (usize, String)> {
            if let Some((id, _, done)) = cur {
                let frame = done.ok_or((line, format!("frame {id} has no END or ERR line")))?;
                if frames.insert(id.clone(), frame).is_some() {
                    return Err((line, format!("frame {id} listed twice")));
                }
            }
            Ok(())
        }

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("FRAME ") {
                close(&mut frames, current.take(), lineno)?;
                let id = FrameId::new(rest.trim()).map_err(|e| (lineno, e.to_string()))?;
                current = Some((id, Vec::new(), None));
                continue;
            }
            let Some((id, dets, done)) = current.as_mut() else {
                return Err((lineno, "line outside a FRAME block".into()));
            };
            if done.is_some() {
                return Err((lineno, format!("line after the end of frame {id}")));
            }
            let msg = AdapterMessage::parse(line).map_err(|e| (lineno, e.to_string()))?;
            let msg_frame = match &msg {
                AdapterMessage::Det(d) => &d.frame_id,
                AdapterMessage::End { frame_id, .. } | AdapterMessage::Err { frame_id, .. } => {
                    frame_id
                }
                AdapterMessage::Ready(_) => {
                    return Err((lineno, "READY is not valid in a replay file".into()))
                }
            };
            if msg_frame != id {
                return Err((lineno, format!("frame id {msg_frame} inside block {id}")));
            }
            match msg {
                AdapterMessage::Det(d) => dets.push(d),
                AdapterMessage::End { elapsed_ms, .. } => {
                    *done = Some(ReplayFrame::Ok {
                        detections: std::mem::take(dets),
                        elapsed_ms,
                    })
                }
                AdapterMessage::Err { message, .. } => *done = Some(ReplayFrame::Err(message)),
                AdapterMessage::Ready(_) => unreachable!(),
            }
        }
        let end = text.lines().count();
        close(&mut frames, current.take(), end)?;
        Ok(Self { frames })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, f) in &self.frames {
            s.push_str(&format!("FRAME {id}\n"));
            match f {
                ReplayFrame::Ok {
                    detections,
                    elapsed_ms,
                } => {
                    for d in detections {
                        s.push_str(&AdapterMessage::Det(d.clone()).to_string());
                        s.push('\n');
                    }
                    let end = AdapterMessage::End {
                        frame_id: id.clone(),
                        elapsed_ms: *elapsed_ms,
                    };
                    s.push_str(&end.to_string());
                    s.push('\n');
                }
                ReplayFrame::Err(m) => s.push_str(&format!("ERR {id} {m}\n")),
            }
        }
        s
    }
}

pub struct FixtureDetector {
    id: DetectorId,
    path: PathBuf,
    replay: ReplayFile,
    delay: Option<Duration>,
    served: u64,
    stopped: bool,
}

impl FixtureDetector {
    pub fn open(id: DetectorId, path: &Path, delay: Option<Duration>) -> Result<Self, DetectorError> {
        let replay = ReplayFile::load(path)?;
        Ok(Self::from_replay(id, path.to_path_buf(), replay, delay))
    }

    pub fn from_replay(
        id: DetectorId,
        path: PathBuf,
        replay: ReplayFile,
        delay: Option<Duration>,
    ) -> Self {
        Self {
            id,
            path,
            replay,
            delay,
            served: 0,
            stopped: false,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Detector for FixtureDetector {
    fn id(&self) -> &DetectorId {
        &self.id
    }

    fn infer(&mut self, frame_id: &FrameId, _image: &Path) -> Result<InferenceResult, DetectorError> {
        if self.stopped {
            return Err(DetectorError::Stopped(self.id.to_string()));
        }
        let start = Instant::now();
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        self.served += 1;
        let (detections, reported) = match self.replay.frames.get(frame_id) {
            None => (Vec::new(), 0.0),
            Some(ReplayFrame::Ok {
                detections,
                elapsed_ms,
            }) => (
                detections
                    .iter()
                    .map(|d| d.clone().into_detection(&self.id))
                    .collect(),
                *elapsed_ms,
            ),
            Some(ReplayFrame::Err(message)) => {
                return Err(DetectorError::Fault {
                    detector: self.id.to_string(),
                    frame_id: frame_id.to_string(),
                    reason: message.clone(),
                })
            }
        };
        Ok(InferenceResult {
            frame_id: frame_id.clone(),
            detections,
            elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
            reported_ms: Some(reported),
        })
    }

    fn frames_served(&self) -> u64 {
        self.served
    }

    fn stop(&mut self) {
        self.stopped = true;
    }
}
