//! Bounded on-disk frame store with reference-counted leases.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tracing::debug;

use crate::geometry::FrameId;

/// Keeps a spooled frame file alive while held. Cloning shares the lease.
#[derive(Debug, Clone)]
pub struct SpoolLease(#[allow(dead_code)] Arc<()>);

struct Entry {
    frame_id: FrameId,
    path: PathBuf,
    token: Arc<()>,
}

/// Frames are written as `<dir>/<frame_id>.jpg`. Once more than `cap` files
/// are retained, the oldest files nobody holds a lease on are deleted.
pub struct Spool {
    dir: PathBuf,
    cap: usize,
    entries: VecDeque<Entry>,
}

impl Spool {
    pub fn new(dir: &Path, cap: usize) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            cap: cap.max(1),
            entries: VecDeque::new(),
        })
    }

    pub fn path_for(&self, frame_id: &FrameId) -> PathBuf {
        self.dir.join(format!("{frame_id}.jpg"))
    }

    pub fn admit(&mut self, frame_id: &FrameId, bytes: &[u8]) -> std::io::Result<(PathBuf, SpoolLease)> {
        let path = self.path_for(frame_id);
        std::fs::write(&path, bytes)?;
        let token = Arc::new(());
        let lease = SpoolLease(token.clone());
        self.entries.push_back(Entry {
            frame_id: frame_id.clone(),
            path: path.clone(),
            token,
        });
        self.evict();
        Ok((path, lease))
    }

    fn evict(&mut self) {
        while self.entries.len() > self.cap {
            let Some(pos) = self
                .entries
                .iter()
                .position(|e| Arc::strong_count(&e.token) == 1)
            else {
                break;
            };
            let e = self.entries.remove(pos).expect("index in range");
            debug!(frame = %e.frame_id, "evicting spooled frame");
            let _ = std::fs::remove_file(&e.path);
        }
    }

    pub fn retained(&self) -> Vec<FrameId> {
        self.entries.iter().map(|e| e.frame_id.clone()).collect()
    }
}
