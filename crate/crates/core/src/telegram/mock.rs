//! In-memory transport that records every call and serves scripted updates.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Transport, TransportError, Update};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum Call {
    Message { chat_id: i64, text: String },
    Photo { chat_id: i64, path: PathBuf, caption: String },
}

#[derive(Default)]
struct State {
    calls: Vec<Call>,
    send_failures: VecDeque<TransportError>,
    /// (first poll index at which the update is visible, update)
    pending: Vec<(u64, Update)>,
    poll_failures: BTreeMap<u64, TransportError>,
    polls: u64,
    next_message_id: i64,
}

/// Clones share state, so a test can keep one handle while the gateway owns
/// another.
#[derive(Clone, Default)]
pub struct MockTransport(Arc<Mutex<State>>);

impl MockTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes `update` visible from the `poll_index`-th poll (0-based) on, until
    /// an offset confirms it.
    pub fn push_update(&self, poll_index: u64, update: Update) {
        self.0.lock().expect("mock").pending.push((poll_index, update));
    }

    /// The next send attempt fails with `err` (queued in order).
    pub fn fail_next_send(&self, err: TransportError) {
        self.0.lock().expect("mock").send_failures.push_back(err);
    }

    /// The `poll_index`-th poll fails with `err`.
    pub fn fail_poll(&self, poll_index: u64, err: TransportError) {
        self.0.lock().expect("mock").poll_failures.insert(poll_index, err);
    }

    pub fn calls(&self) -> Vec<Call> {
        self.0.lock().expect("mock").calls.clone()
    }

    pub fn polls(&self) -> u64 {
        self.0.lock().expect("mock").polls
    }

    fn record(&self, call: Call) -> Result<i64, TransportError> {
        let mut s = self.0.lock().expect("mock");
        s.calls.push(call);
        if let Some(e) = s.send_failures.pop_front() {
            return Err(e);
        }
        s.next_message_id += 1;
        Ok(s.next_message_id)
    }
}

impl Transport for MockTransport {
    fn send_message(&mut self, chat_id: i64, text: &str) -> Result<i64, TransportError> {
        self.record(Call::Message {
            chat_id,
            text: text.to_string(),
        })
    }

    fn send_photo(&mut self, chat_id: i64, photo: &Path, caption: &str) -> Result<i64, TransportError> {
        self.record(Call::Photo {
            chat_id,
            path: photo.to_path_buf(),
            caption: caption.to_string(),
        })
    }

    fn get_updates(&mut self, offset: Option<i64>, _timeout_s: u64) -> Result<Vec<Update>, TransportError> {
        let mut s = self.0.lock().expect("mock");
        let index = s.polls;
        s.polls += 1;
        if let Some(o) = offset {
            s.pending.retain(|(_, u)| u.update_id >= o);
        }
        if let Some(e) = s.poll_failures.remove(&index) {
            return Err(e);
        }
        let mut out: Vec<Update> = s
            .pending
            .iter()
            .filter(|(from, _)| *from <= index)
            .map(|(_, u)| u.clone())
            .collect();
        out.sort_by_key(|u| u.update_id);
        Ok(out)
    }
}
