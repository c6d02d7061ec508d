//! Alert delivery and operator command polling over the Telegram Bot API.
//!
//! Both halves talk through a [`Transport`], so the live HTTPS client and the
//! in-memory [`MockTransport`] are interchangeable.

mod http;
mod mock;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::clock::Clock;
use crate::engine::{Command, Verb};

pub use http::HttpTransport;
pub use mock::{Call, MockTransport};

pub const HELP_TEXT: &str =
    "Unknown command. Send 'deter' to start the deterrent sound or 'stop' to end it.";

/// Bot token. Never printed: `Debug` is redacted and there is no `Display`.
#[derive(Clone, PartialEq, Eq)]
pub struct BotToken(String);

impl BotToken {
    pub fn new(token: impl Into<String>) -> Self {
        Self(token.into())
    }

    pub fn from_env(var: &str) -> Result<Self, String> {
        match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => Ok(Self(v.trim().to_string())),
            _ => Err(format!("environment variable {var} is not set")),
        }
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for BotToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BotToken(<redacted>)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Live,
    #[default]
    Mock,
}

fn default_poll_timeout() -> u64 {
    30
}
fn default_backoff() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_token_env() -> String {
    "SENTINEL_BOT_TOKEN".into()
}
fn default_api_base() -> String {
    "https://api.telegram.org".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub chat_id: i64,
    #[serde(default = "default_poll_timeout")]
    pub poll_timeout_s: u64,
    /// Delay before each retry of a failed send; its length is the retry count.
    #[serde(default = "default_backoff")]
    pub retry_backoff_s: Vec<f64>,
    /// Name of the environment variable holding the bot token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "default_api_base")]
    pub api_base: String,
    /// Inbound messages the mock transport serves, for scripted runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mock_updates: Vec<ScriptedUpdate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedUpdate {
    /// 0-based index of the poll from which the message is visible.
    pub poll: u64,
    pub text: String,
    /// Defaults to the configured chat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat_id: Option<i64>,
}

impl GatewayConfig {
    pub fn new(chat_id: i64) -> Self {
        Self {
            chat_id,
            poll_timeout_s: default_poll_timeout(),
            retry_backoff_s: default_backoff(),
            token_env: default_token_env(),
            transport: TransportKind::Mock,
            api_base: default_api_base(),
            mock_updates: Vec::new(),
        }
    }

    /// A mock transport loaded with `mock_updates`; update ids follow list
    /// order.
    pub fn scripted_mock(&self) -> MockTransport {
        let mock = MockTransport::new();
        for (i, u) in self.mock_updates.iter().enumerate() {
            mock.push_update(
                u.poll,
                Update {
                    update_id: i as i64 + 1,
                    chat_id: u.chat_id.unwrap_or(self.chat_id),
                    text: Some(u.text.clone()),
                },
            );
        }
        mock
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.poll_timeout_s < 1 {
            return Err("poll_timeout_s must be >= 1".into());
        }
        if self.retry_backoff_s.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err("retry_backoff_s entries must be >= 0".into());
        }
        if self.token_env.trim().is_empty() {
            return Err("token_env is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("throttled")]
    Throttled { retry_after_s: Option<f64> },
    #[error("network failure: {0}")]
    Network(String),
    #[error("request rejected: {0}")]
    Rejected(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        matches!(self, TransportError::Throttled { .. } | TransportError::Network(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub update_id: i64,
    pub chat_id: i64,
    pub text: Option<String>,
}

pub trait Transport: Send {
    /// Returns the id of the sent message.
    fn send_message(&mut self, chat_id: i64, text: &str) -> Result<i64, TransportError>;
    fn send_photo(&mut self, chat_id: i64, photo: &std::path::Path, caption: &str) -> Result<i64, TransportError>;
    /// Long-polls for updates with id >= `offset`; passing an offset confirms
    /// every earlier update.
    fn get_updates(&mut self, offset: Option<i64>, timeout_s: u64) -> Result<Vec<Update>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundAlert {
    pub text: String,
    pub photo_path: Option<PathBuf>,
    pub correlation_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub correlation_id: String,
    pub message_id: i64,
    pub attempts: u32,
    pub with_photo: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeliveryError {
    #[error("bot authentication failed: {0}")]
    Auth(String),
    #[error("delivery of {correlation_id} failed after {attempts} attempts: {last}")]
    Exhausted {
        correlation_id: String,
        attempts: u32,
        last: TransportError,
    },
    #[error("alert {0} has empty text")]
    EmptyText(String),
}

#[derive(Debug, Error)]
pub enum PollError {
    #[error("bot authentication failed: {0}")]
    Auth(String),
    #[error("command mailbox closed")]
    Closed,
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub fn real_sleep() -> Sleeper {
    Arc::new(std::thread::sleep)
}

/// Outbound half: alerts, notices and replies.
pub struct AlertSender {
    cfg: GatewayConfig,
    transport: Box<dyn Transport>,
    sleep: Sleeper,
}

impl AlertSender {
    pub fn new(cfg: GatewayConfig, transport: Box<dyn Transport>) -> Self {
        Self::with_sleeper(cfg, transport, real_sleep())
    }

    pub fn with_sleeper(cfg: GatewayConfig, transport: Box<dyn Transport>, sleep: Sleeper) -> Self {
        Self { cfg, transport, sleep }
    }

    /// Sends the photo with the text as caption, or the text alone when there
    /// is no photo (or it vanished from disk). Transient failures are retried
    /// along `retry_backoff_s`.
    pub fn send_alert(&mut self, alert: &OutboundAlert) -> Result<Receipt, DeliveryError> {
        if alert.text.trim().is_empty() {
            return Err(DeliveryError::EmptyText(alert.correlation_id.clone()));
        }
        let photo = alert.photo_path.as_ref().filter(|p| {
            let ok = p.is_file();
            if !ok {
                warn!(correlation = %alert.correlation_id, "snapshot missing; sending text only");
            }
            ok
        });
        let chat = self.cfg.chat_id;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let r = match photo {
                Some(p) => self.transport.send_photo(chat, p, &alert.text),
                None => self.transport.send_message(chat, &alert.text),
            };
            match r {
                Ok(message_id) => {
                    debug!(correlation = %alert.correlation_id, attempts, "alert delivered");
                    return Ok(Receipt {
                        correlation_id: alert.correlation_id.clone(),
                        message_id,
                        attempts,
                        with_photo: photo.is_some(),
                    });
                }
                Err(TransportError::Auth(m)) => return Err(DeliveryError::Auth(m)),
                Err(e) if e.is_transient() && (attempts as usize) <= self.cfg.retry_backoff_s.len() => {
                    let mut wait = self.cfg.retry_backoff_s[attempts as usize - 1];
                    if let TransportError::Throttled { retry_after_s: Some(s) } = &e {
                        wait = wait.max(*s);
                    }
                    warn!(correlation = %alert.correlation_id, error = %e, wait, "send failed; retrying");
                    (self.sleep)(Duration::from_secs_f64(wait));
                }
                Err(last) => {
                    return Err(DeliveryError::Exhausted {
                        correlation_id: alert.correlation_id.clone(),
                        attempts,
                        last,
                    })
                }
            }
        }
    }

    /// Plain text (acks, notices, help) with the same retry policy.
    pub fn send_text(&mut self, text: &str, correlation_id: &str) -> Result<Receipt, DeliveryError> {
        self.send_alert(&OutboundAlert {
            text: text.to_string(),
            photo_path: None,
            correlation_id: correlation_id.to_string(),
        })
    }
}

/// Inbound half: turns chat messages into engine commands.
pub struct CommandPoller {
    cfg: GatewayConfig,
    transport: Box<dyn Transport>,
    clock: Arc<dyn Clock>,
    offset: Option<i64>,
    faults: u64,
}

impl CommandPoller {
    pub fn new(cfg: GatewayConfig, transport: Box<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        Self {
            cfg,
            transport,
            clock,
            offset: None,
            faults: 0,
        }
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    /// Offset that will confirm everything handled so far.
    pub fn offset(&self) -> Option<i64> {
        self.offset
    }

    /// One long poll. Each recognized command is handed to `enqueue` in arrival
    /// order and the offset moves past an update only once it has been handled;
    /// if `enqueue` refuses, the rest of the batch stays unconfirmed and will be
    /// fetched again. Network faults yield an empty batch.
    pub fn poll_commands(&mut self, enqueue: &mut dyn FnMut(Command) -> bool) -> Result<Vec<Command>, PollError> {
        self.poll_with_timeout(self.cfg.poll_timeout_s, enqueue)
    }

    pub fn poll_with_timeout(
        &mut self,
        timeout_s: u64,
        enqueue: &mut dyn FnMut(Command) -> bool,
    ) -> Result<Vec<Command>, PollError> {
        let updates = match self.transport.get_updates(self.offset, timeout_s) {
            Ok(u) => u,
            Err(TransportError::Auth(m)) => return Err(PollError::Auth(m)),
            Err(e) => {
                self.faults += 1;
                warn!(error = %e, "polling for commands failed");
                return Ok(Vec::new());
            }
        };
        let mut out = Vec::new();
        for u in updates {
            if self.offset.is_some_and(|o| u.update_id < o) {
                continue;
            }
            if u.chat_id != self.cfg.chat_id {
                debug!(chat = u.chat_id, "ignoring message from another chat");
            } else if let Some(verb) = u.text.as_deref().and_then(Verb::parse) {
                let cmd = Command {
                    verb,
                    issuer: u.chat_id,
                    time: self.clock.now_ms(),
                };
                if !enqueue(cmd.clone()) {
                    return Err(PollError::Closed);
                }
                info!(?verb, "command received");
                out.push(cmd);
            } else {
                if let Err(e) = self.transport.send_message(self.cfg.chat_id, HELP_TEXT) {
                    warn!(error = %e, "help reply failed");
                }
            }
            self.offset = Some(u.update_id + 1);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn cfg() -> GatewayConfig {
        let mut c = GatewayConfig::new(42);
        c.retry_backoff_s = vec![0.0, 0.0];
        c
    }

    fn no_sleep() -> Sleeper {
        Arc::new(|_| {})
    }

    fn upd(id: i64, chat: i64, text: &str) -> Update {
        Update {
            update_id: id,
            chat_id: chat,
            text: Some(text.into()),
        }
    }

    #[test]
    fn token_is_redacted() {
        let t = BotToken::new("123456:SECRET");
        assert!(!format!("{t:?}").contains("SECRET"));
        assert_eq!(t.expose(), "123456:SECRET");
    }

    #[test]
    fn photo_alert_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let snap = dir.path().join("snap.jpg");
        std::fs::write(&snap, b"jpeg").unwrap();
        let mock = MockTransport::new();
        let mut s = AlertSender::with_sleeper(cfg(), Box::new(mock.clone()), no_sleep());
        let r = s
            .send_alert(&OutboundAlert {
                text: "Elephant detected (91%)".into(),
                photo_path: Some(snap.clone()),
                correlation_id: "alert-f001".into(),
            })
            .unwrap();
        assert!(r.with_photo);
        assert_eq!(r.attempts, 1);
        assert_eq!(
            mock.calls(),
            vec![Call::Photo {
                chat_id: 42,
                path: snap,
                caption: "Elephant detected (91%)".into()
            }]
        );
    }

    #[test]
    fn text_only_without_photo() {
        let mock = MockTransport::new();
        let mut s = AlertSender::with_sleeper(cfg(), Box::new(mock.clone()), no_sleep());
        let r = s.send_text("Boar detected (67%)", "alert-f002").unwrap();
        assert!(!r.with_photo);
        assert_eq!(
            mock.calls(),
            vec![Call::Message {
                chat_id: 42,
                text: "Boar detected (67%)".into()
            }]
        );
    }

    #[test]
    fn throttle_then_success_counts_one_retry() {
        let mock = MockTransport::new();
        mock.fail_next_send(TransportError::Throttled { retry_after_s: None });
        let slept = Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = slept.clone();
        let mut s = AlertSender::with_sleeper(
            GatewayConfig::new(42),
            Box::new(mock.clone()),
            Arc::new(move |d| log.lock().unwrap().push(d)),
        );
        let r = s.send_text("x", "c1").unwrap();
        assert_eq!(r.attempts, 2);
        assert_eq!(mock.calls().len(), 2);
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_secs(1)]);
    }

    #[test]
    fn retries_exhaust_and_auth_is_fatal() {
        let mock = MockTransport::new();
        for _ in 0..3 {
            mock.fail_next_send(TransportError::Network("down".into()));
        }
        let mut s = AlertSender::with_sleeper(cfg(), Box::new(mock.clone()), no_sleep());
        match s.send_text("x", "c1") {
            Err(DeliveryError::Exhausted { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        mock.fail_next_send(TransportError::Auth("401".into()));
        assert!(matches!(s.send_text("x", "c2"), Err(DeliveryError::Auth(_))));
        assert!(matches!(s.send_text(" ", "c3"), Err(DeliveryError::EmptyText(_))));
    }

    fn poller(mock: &MockTransport) -> CommandPoller {
        CommandPoller::new(cfg(), Box::new(mock.clone()), Arc::new(ManualClock::new(7)))
    }

    #[test]
    fn commands_are_normalized_and_filtered() {
        let mock = MockTransport::new();
        mock.push_update(0, upd(1, 42, "deter"));
        mock.push_update(0, upd(2, 42, "DETER "));
        mock.push_update(0, upd(3, 99, "stop"));
        mock.push_update(0, upd(4, 42, "hello"));
        let mut p = poller(&mock);
        let mut queue = Vec::new();
        let got = p.poll_commands(&mut |c| {
            queue.push(c);
            true
        })
        .unwrap();
        assert_eq!(got.iter().map(|c| c.verb).collect::<Vec<_>>(), vec![Verb::Deter, Verb::Deter]);
        assert_eq!(queue, got);
        assert_eq!(got[0].time, 7);
        assert_eq!(p.offset(), Some(5));
        assert!(mock.calls().contains(&Call::Message {
            chat_id: 42,
            text: HELP_TEXT.into()
        }));
        // confirmed updates are not delivered again
        assert!(p.poll_commands(&mut |_| true).unwrap().is_empty());
    }

    #[test]
    fn refused_enqueue_keeps_update_pending() {
        let mock = MockTransport::new();
        mock.push_update(0, upd(10, 42, "deter"));
        mock.push_update(0, upd(11, 42, "stop"));
        let mut p = poller(&mock);
        let mut n = 0;
        let r = p.poll_commands(&mut |_| {
            n += 1;
            n == 1
        });
        assert!(matches!(r, Err(PollError::Closed)));
        assert_eq!(p.offset(), Some(11));
        let again = p.poll_commands(&mut |_| true).unwrap();
        assert_eq!(again.len(), 1);
        assert_eq!(again[0].verb, Verb::Stop);
    }

    #[test]
    fn network_fault_is_an_empty_batch() {
        let mock = MockTransport::new();
        mock.fail_poll(0, TransportError::Network("reset".into()));
        mock.push_update(1, upd(1, 42, "stop"));
        let mut p = poller(&mock);
        assert!(p.poll_commands(&mut |_| true).unwrap().is_empty());
        assert_eq!(p.faults(), 1);
        assert_eq!(p.poll_commands(&mut |_| true).unwrap().len(), 1);
        mock.fail_poll(2, TransportError::Auth("401".into()));
        assert!(matches!(p.poll_commands(&mut |_| true), Err(PollError::Auth(_))));
    }
}
