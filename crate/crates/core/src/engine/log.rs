//! Append-only JSON-lines record of every engine transition.
//!
//! Snapshot paths under the log's directory are written relative to it so
//! logs from identical runs in different directories compare equal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Ack, Action, Mode, Verb};
use crate::clock::{format_utc, Millis};
use crate::geometry::{ClassLabel, FrameId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputRecord {
    Frame {
        frame_id: FrameId,
        detections: usize,
        classes: Vec<ClassLabel>,
    },
    Command {
        verb: Verb,
        issuer: i64,
        ack: Ack,
    },
    Notice,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub time_ms: Millis,
    pub time: String,
    pub input: InputRecord,
    pub mode: Mode,
    pub actions: Vec<Action>,
}

pub struct ActionLog {
    path: PathBuf,
    base: PathBuf,
    out: BufWriter<File>,
    seq: u64,
}

impl ActionLog {
    /// Creates (truncating) the log file and its parent directory.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if !base.as_os_str().is_empty() {
            std::fs::create_dir_all(&base)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            base,
            out: BufWriter::new(File::create(path)?),
            seq: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, now: Millis, input: InputRecord, mode: Mode, actions: &[Action]) -> std::io::Result<()> {
        self.seq += 1;
        let actions = actions.iter().map(|a| self.relativize(a)).collect();
        let rec = LogRecord {
            seq: self.seq,
            time_ms: now,
            time: format_utc(now),
            input,
            mode,
            actions,
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out.write_all(b"\n")?;
        // one line per transition reaches disk even if the process dies
        self.out.flush()
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_all()
    }

    fn relativize(&self, a: &Action) -> Action {
        let mut a = a.clone();
        if let Action::SendAlert { snapshot, .. } = &mut a {
            if let Ok(rel) = snapshot.strip_prefix(&self.base) {
                *snapshot = rel.to_path_buf();
            }
        }
        a
    }
}

pub fn read_action_log(path: &Path) -> std::io::Result<Vec<LogRecord>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
