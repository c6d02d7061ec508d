//! Line-delimited detection protocol spoken between the host and adapter
//! processes (UTF-8, one message per line).
//!
//! ```text
//! host -> adapter   INFER <frame_id> <absolute_image_path>
//!                   QUIT
//! adapter -> host   READY <detector_name>
//!                   DET <frame_id> <class> <conf> <x_min> <y_min> <x_max> <y_max>
//!                   END <frame_id> <elapsed_ms>
//!                   ERR <frame_id> <message>
//! ```
//!
//! Confidence and coordinates are decimals with exactly six fractional digits,
//! normalized to `[0, 1]`.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{BBox, ClassLabel, Detection, DetectorId, FrameId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("empty line")]
    Empty,
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
    #[error("{kind}: expected {expected} fields, got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("malformed number {0:?} (expected d.dddddd)")]
    Number(String),
    #[error("malformed elapsed time {0:?}")]
    Elapsed(String),
    #[error("value {0} outside [0, 1]")]
    Range(f64),
    #[error("invalid field: {0}")]
    Field(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HostMessage {
    Infer { frame_id: FrameId, image: PathBuf },
    Quit,
}

impl fmt::Display for HostMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HostMessage::Infer { frame_id, image } => {
                write!(f, "INFER {} {}", frame_id, image.display())
            }
            HostMessage::Quit => f.write_str("QUIT"),
        }
    }
}

impl HostMessage {
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let line = line.trim_end_matches(['\r', '\n']);
        if line == "QUIT" {
            return Ok(HostMessage::Quit);
        }
        let mut parts = line.splitn(3, ' ');
        match parts.next() {
            Some("INFER") => {
                let frame = parts.next().ok_or(ProtocolError::Arity {
                    kind: "INFER",
                    expected: 2,
                    got: 0,
                })?;
                let path = parts.next().filter(|p| !p.is_empty()).ok_or(ProtocolError::Arity {
                    kind: "INFER",
                    expected: 2,
                    got: 1,
                })?;
                Ok(HostMessage::Infer {
                    frame_id: FrameId::new(frame).map_err(|e| ProtocolError::Field(e.to_string()))?,
                    image: PathBuf::from(path),
                })
            }
            Some("") | None => Err(ProtocolError::Empty),
            Some(other) => Err(ProtocolError::UnknownKind(other.to_string())),
        }
    }
}

/// A detection as it appears on the wire, before it is tagged with the
/// detector that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct WireDetection {
    pub frame_id: FrameId,
    pub label: ClassLabel,
    pub confidence: f64,
    pub bbox: BBox,
}

impl WireDetection {
    pub fn into_detection(self, source: &DetectorId) -> Detection {
        Detection {
            bbox: self.bbox,
            label: self.label,
            confidence: self.confidence,
            source: source.clone(),
            frame_id: self.frame_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdapterMessage {
    Ready(String),
    Det(WireDetection),
    End { frame_id: FrameId, elapsed_ms: f64 },
    Err { frame_id: FrameId, message: String },
}

/// Formats a fraction with the six fractional digits the protocol requires.
pub fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

impl fmt::Display for AdapterMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterMessage::Ready(name) => write!(f, "READY {name}"),
            AdapterMessage::Det(d) => write!(
                f,
                "DET {} {} {} {} {} {} {}",
                d.frame_id,
                d.label,
                fixed6(d.confidence),
                fixed6(d.bbox.x_min()),
                fixed6(d.bbox.y_min()),
                fixed6(d.bbox.x_max()),
                fixed6(d.bbox.y_max()),
            ),
            AdapterMessage::End {
                frame_id,
                elapsed_ms,
            } => {
                if elapsed_ms.fract() == 0.0 {
                    write!(f, "END {} {}", frame_id, *elapsed_ms as u64)
                } else {
                    write!(f, "END {frame_id} {elapsed_ms}")
                }
            }
            AdapterMessage::Err { frame_id, message } => write!(f, "ERR {frame_id} {message}"),
        }
    }
}

fn parse_fraction(s: &str) -> Result<f64, ProtocolError> {
    let bad = || ProtocolError::Number(s.to_string());
    let (int, frac) = s.split_once('.').ok_or_else(bad)?;
    if int.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || frac.len() != 6
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let v: f64 = s.parse().map_err(|_| bad())?;
    if !(0.0..=1.0).contains(&v) {
        return Err(ProtocolError::Range(v));
    }
    Ok(v)
}

fn parse_elapsed(s: &str) -> Result<f64, ProtocolError> {
    let bad = || ProtocolError::Elapsed(s.to_string());
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    let ok = match s.split_once('.') {
        Some((i, f)) => digits(i) && digits(f),
        None => digits(s),
    };
    if !ok {
        return Err(bad());
    }
    s.parse().map_err(|_| bad())
}

fn frame(s: &str) -> Result<FrameId, ProtocolError> {
    FrameId::new(s).map_err(|e| ProtocolError::Field(e.to_string()))
}

impl AdapterMessage {
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let line = line.trim_end_matches(['\r', '\n']);
        let kind = line.split(' ').next().unwrap_or("");
        match kind {
            "READY" => {
                let name = line["READY".len()..].trim_start_matches(' ');
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(ProtocolError::Arity {
                        kind: "READY",
                        expected: 1,
                        got: if name.is_empty() { 0 } else { 2 },
                    });
                }
                Ok(AdapterMessage::Ready(name.to_string()))
            }
            "DET" => {
                let f: Vec<&str> = line.split(' ').skip(1).collect();
                if f.len() != 7 {
                    return Err(ProtocolError::Arity {
                        kind: "DET",
                        expected: 7,
                        got: f.len(),
                    });
                }
                let label =
                    ClassLabel::new(f[1]).map_err(|e| ProtocolError::Field(e.to_string()))?;
                let confidence = parse_fraction(f[2])?;
                let c: Vec<f64> = f[3..7]
                    .iter()
                    .map(|s| parse_fraction(s))
                    .collect::<Result<_, _>>()?;
                let bbox = BBox::new(c[0], c[1], c[2], c[3])
                    .map_err(|e| ProtocolError::Field(e.to_string()))?;
                Ok(AdapterMessage::Det(WireDetection {
                    frame_id: frame(f[0])?,
                    label,
                    confidence,
                    bbox,
                }))
            }
            "END" => {
                let f: Vec<&str> = line.split(' ').skip(1).collect();
                if f.len() != 2 {
                    return Err(ProtocolError::Arity {
                        kind: "END",
                        expected: 2,
                        got: f.len(),
                    });
                }
                Ok(AdapterMessage::End {
                    frame_id: frame(f[0])?,
                    elapsed_ms: parse_elapsed(f[1])?,
                })
            }
            "ERR" => {
                let mut parts = line.splitn(3, ' ').skip(1);
                let fid = parts.next().ok_or(ProtocolError::Arity {
                    kind: "ERR",
                    expected: 2,
                    got: 0,
                })?;
                Ok(AdapterMessage::Err {
                    frame_id: frame(fid)?,
                    message: parts.next().unwrap_or("").to_string(),
                })
            }
            "" => Err(ProtocolError::Empty),
            other => Err(ProtocolError::UnknownKind(other.to_string())),
        }
    }
}

/// Absolute form of an image path for an `INFER` line.
pub fn absolute(path: &Path) -> std::io::Result<PathBuf> {
    std::path::absolute(path)
}
