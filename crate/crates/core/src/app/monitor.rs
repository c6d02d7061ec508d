use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tracing::{error, info, warn};

use super::{make_clock, start_detectors, stop_detectors, AppError};
use crate::audio::{AudioSink, Deterrent};
use crate::clock::Clock;
use crate::config::{AppConfig, IoMode};
use crate::detector::{infer_all, Health};
use crate::engine::{alert_text, Action, ActionLog, Command, Engine};
use crate::fusion::fuse_many;
use crate::geometry::Detection;
use crate::ingestion::open_source;
use crate::telegram::{
    AlertSender, BotToken, CommandPoller, DeliveryError, HttpTransport, MockTransport, OutboundAlert, PollError,
    Sleeper, Transport, TransportKind,
};

pub type TransportFactory = Arc<dyn Fn() -> Box<dyn Transport> + Send + Sync>;

/// Hooks for embedding and testing; `Default` gives the behavior of the CLI.
#[derive(Default)]
pub struct MonitorEnv {
    /// Replaces the transport chosen by `telegram.transport`.
    pub transport: Option<TransportFactory>,
    /// Used instead of reading `telegram.token_env`.
    pub token: Option<BotToken>,
    /// Set from a signal handler to end the run after the current frame.
    pub shutdown: Arc<AtomicBool>,
    /// Replaces the sink chosen by `deterrent.sink`.
    pub audio_sink: Option<Box<dyn AudioSink>>,
    /// Replaces real sleeping between send retries.
    pub retry_sleeper: Option<Sleeper>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorSummary {
    pub frames: u64,
    pub alerts: u64,
    pub commands: u64,
    pub notices: u64,
    pub delivery_failures: u64,
    pub detector_faults: BTreeMap<String, u64>,
    pub degraded: Vec<String>,
    pub action_log: PathBuf,
    /// Calls recorded by the built-in mock transport.
    pub outbox: Option<PathBuf>,
}

enum Outgoing {
    Alert(OutboundAlert),
}

enum Outbound {
    Inline(AlertSender),
    Background {
        tx: Option<mpsc::Sender<Outgoing>>,
        thread: Option<JoinHandle<()>>,
    },
}

/// Everything an [`Action`] can touch.
struct Sinks {
    out: Outbound,
    deterrent: Deterrent,
    fatal: Arc<Mutex<Option<String>>>,
    failures: Arc<Mutex<u64>>,
    clock: Arc<dyn Clock>,
    next_text: u64,
}

fn deliver(sender: &mut AlertSender, msg: &OutboundAlert, fatal: &Mutex<Option<String>>, failures: &Mutex<u64>) {
    match sender.send_alert(msg) {
        Ok(_) => {}
        Err(DeliveryError::Auth(m)) => {
            error!(error = %m, "telegram rejected the bot token");
            fatal
                .lock()
                .expect("fatal slot")
                .get_or_insert(format!("telegram authentication failed: {m}"));
        }
        Err(e) => {
            *failures.lock().expect("failure count") += 1;
            warn!(error = %e, "alert delivery failed");
        }
    }
}

impl Sinks {
    fn send(&mut self, msg: OutboundAlert) {
        match &mut self.out {
            Outbound::Inline(sender) => deliver(sender, &msg, &self.fatal, &self.failures),
            Outbound::Background { tx, .. } => {
                if let Some(tx) = tx {
                    let _ = tx.send(Outgoing::Alert(msg));
                }
            }
        }
    }

    fn send_text(&mut self, text: &str) {
        self.next_text += 1;
        let correlation_id = format!("msg-{}", self.next_text);
        self.send(OutboundAlert {
            text: text.to_string(),
            photo_path: None,
            correlation_id,
        });
    }

    fn dispatch(&mut self, actions: &[Action], engine: &mut Engine, summary: &mut MonitorSummary) {
        for a in actions {
            match a {
                Action::SendAlert {
                    snapshot, correlation_id, ..
                } => {
                    summary.alerts += 1;
                    let text = alert_text(a, self.clock.now_ms()).expect("alert action");
                    self.send(OutboundAlert {
                        text,
                        photo_path: Some(snapshot.clone()),
                        correlation_id: correlation_id.clone(),
                    });
                }
                Action::StartDeterrent => match self.deterrent.start() {
                    Ok(_) => {}
                    Err(e) => {
                        let follow = engine.on_notice(&format!("Deterrent sound unavailable: {e}"));
                        self.dispatch(&follow, engine, summary);
                    }
                },
                Action::StopDeterrent => {
                    self.deterrent.stop();
                }
                Action::OperatorNotice { message } => {
                    summary.notices += 1;
                    self.send_text(message);
                }
            }
        }
    }

    fn check_playback(&mut self, engine: &mut Engine, summary: &mut MonitorSummary) {
        for f in self.deterrent.take_failures() {
            let follow = engine.on_notice(&format!("Deterrent playback stopped: {f}"));
            self.dispatch(&follow, engine, summary);
        }
    }

    fn fatal(&self) -> Option<String> {
        self.fatal.lock().expect("fatal slot").clone()
    }

    /// Drains queued messages.
    fn close(&mut self) {
        if let Outbound::Background { tx, thread } = &mut self.out {
            tx.take();
            if let Some(t) = thread.take() {
                let _ = t.join();
            }
        }
    }
}

enum Inbound {
    Inline(CommandPoller),
    Background {
        rx: mpsc::Receiver<Command>,
        stop: Arc<AtomicBool>,
    },
}

impl Inbound {
    fn drain(&mut self, fatal: &Mutex<Option<String>>) -> Vec<Command> {
        match self {
            Inbound::Inline(p) => {
                let mut got = Vec::new();
                match p.poll_with_timeout(0, &mut |c| {
                    got.push(c);
                    true
                }) {
                    Ok(_) => {}
                    Err(PollError::Auth(m)) => {
                        fatal
                            .lock()
                            .expect("fatal slot")
                            .get_or_insert(format!("telegram authentication failed: {m}"));
                    }
                    Err(PollError::Closed) => {}
                }
                got
            }
            Inbound::Background { rx, .. } => rx.try_iter().collect(),
        }
    }

    fn close(&mut self) {
        if let Inbound::Background { stop, .. } = self {
            stop.store(true, Ordering::SeqCst);
        }
    }
}

/// Runs source → detectors → fusion → engine → sinks until the source ends,
/// `env.shutdown` is raised, or a fatal error occurs. Cleanup always runs.
pub fn run_monitor(cfg: &AppConfig, env: MonitorEnv) -> Result<MonitorSummary, AppError> {
    let (clock, manual) = make_clock(cfg);
    let out_dir = cfg.run.output_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| AppError::Startup(format!("cannot create {}: {e}", out_dir.display())))?;

    let token = match env.token {
        Some(t) => Some(t),
        None => BotToken::from_env(&cfg.telegram.token_env).ok(),
    };
    if cfg.telegram.transport == TransportKind::Live && env.transport.is_none() && token.is_none() {
        return Err(AppError::Config(format!(
            "telegram.transport is live but {} is not set",
            cfg.telegram.token_env
        )));
    }
    info!(token = ?token, transport = ?cfg.telegram.transport, "gateway configured");

    let mut own_mock: Option<MockTransport> = None;
    let factory: TransportFactory = match (env.transport, cfg.telegram.transport) {
        (Some(f), _) => f,
        (None, TransportKind::Mock) => {
            let mock = cfg.telegram.scripted_mock();
            own_mock = Some(mock.clone());
            Arc::new(move || Box::new(mock.clone()) as Box<dyn Transport>)
        }
        (None, TransportKind::Live) => {
            let http = HttpTransport::new(&cfg.telegram.api_base, token.clone().expect("checked above"))
                .map_err(|e| AppError::Startup(e.to_string()))?;
            Arc::new(move || Box::new(http.clone()) as Box<dyn Transport>)
        }
    };

    let sink = env.audio_sink.unwrap_or_else(|| cfg.deterrent.make_sink());
    let deterrent = Deterrent::new(cfg.deterrent.clone(), sink).map_err(|e| AppError::Startup(e.to_string()))?;

    let mut detectors = start_detectors(cfg)?;
    let mut source = match open_source(&cfg.source, clock.clone()) {
        Ok(s) => s,
        Err(e) => {
            stop_detectors(&mut detectors);
            return Err(AppError::Startup(e.to_string()));
        }
    };

    let log_path = out_dir.join("actions.jsonl");
    let log = ActionLog::create(&log_path).map_err(|e| AppError::Startup(format!("{}: {e}", log_path.display())))?;
    let mut engine = Engine::new(cfg.engine.clone(), clock.clone(), &out_dir.join("snapshots"), Some(log));

    let fatal: Arc<Mutex<Option<String>>> = Arc::default();
    let failures: Arc<Mutex<u64>> = Arc::default();
    let sleeper = env.retry_sleeper.clone().unwrap_or_else(crate::telegram::real_sleep);
    let io = cfg.io_mode();
    let out = match io {
        IoMode::Inline => Outbound::Inline(AlertSender::with_sleeper(cfg.telegram.clone(), factory(), sleeper)),
        IoMode::Background => {
            let (tx, rx) = mpsc::channel::<Outgoing>();
            let mut sender = AlertSender::with_sleeper(cfg.telegram.clone(), factory(), sleeper);
            let (fatal, failures) = (fatal.clone(), failures.clone());
            let thread = std::thread::Builder::new()
                .name("telegram-sender".into())
                .spawn(move || {
                    for Outgoing::Alert(msg) in rx {
                        deliver(&mut sender, &msg, &fatal, &failures);
                    }
                })
                .map_err(|e| AppError::Startup(e.to_string()))?;
            Outbound::Background {
                tx: Some(tx),
                thread: Some(thread),
            }
        }
    };
    let mut poller = CommandPoller::new(cfg.telegram.clone(), factory(), clock.clone());
    let mut inbound = match io {
        IoMode::Inline => Inbound::Inline(poller),
        IoMode::Background => {
            let (tx, rx) = mpsc::channel::<Command>();
            let stop = Arc::new(AtomicBool::new(false));
            let (stop2, fatal2) = (stop.clone(), fatal.clone());
            std::thread::Builder::new()
                .name("telegram-poller".into())
                .spawn(move || {
                    while !stop2.load(Ordering::SeqCst) {
                        let started = Instant::now();
                        match poller.poll_commands(&mut |c| tx.send(c).is_ok()) {
                            Ok(_) => {}
                            Err(PollError::Closed) => break,
                            Err(PollError::Auth(m)) => {
                                fatal2
                                    .lock()
                                    .expect("fatal slot")
                                    .get_or_insert(format!("telegram authentication failed: {m}"));
                                break;
                            }
                        }
                        // transports that answer instantly would otherwise spin
                        let spent = started.elapsed();
                        if spent < Duration::from_millis(100) {
                            std::thread::sleep(Duration::from_millis(100) - spent);
                        }
                    }
                })
                .map_err(|e| AppError::Startup(e.to_string()))?;
            Inbound::Background { rx, stop }
        }
    };

    let mut sinks = Sinks {
        out,
        deterrent,
        fatal: fatal.clone(),
        failures: failures.clone(),
        clock: clock.clone(),
        next_text: 0,
    };
    let mut summary = MonitorSummary {
        action_log: log_path.clone(),
        ..MonitorSummary::default()
    };
    info!(detectors = detectors.len(), source = %cfg.source.uri, "monitoring started");

    let mut failure: Option<AppError> = None;
    let mut first = true;
    loop {
        if env.shutdown.load(Ordering::SeqCst) {
            info!("shutdown requested");
            break;
        }
        if let Some(m) = sinks.fatal() {
            failure = Some(AppError::Runtime(m));
            break;
        }
        if !first {
            if let Some(m) = &manual {
                m.advance(cfg.run.frame_interval_ms);
            }
        }
        first = false;

        handle_commands(&mut inbound, &mut sinks, &mut engine, &mut summary);
        sinks.check_playback(&mut engine, &mut summary);

        let frame = match source.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                error!(error = %e, "frame source failed");
                let follow = engine.on_notice(&format!("Camera or video source failed: {e}"));
                sinks.dispatch(&follow, &mut engine, &mut summary);
                failure = Some(AppError::Runtime(e.to_string()));
                break;
            }
        };
        summary.frames += 1;

        let inference = infer_all(&mut detectors, &frame.frame_id, &frame.image_path, cfg.run.execution);
        let mut per_source: Vec<Vec<Detection>> = Vec::with_capacity(detectors.len());
        let mut latency = BTreeMap::new();
        for (d, r) in detectors.iter().zip(inference.results) {
            match r {
                Ok(res) => {
                    latency.insert(d.id().clone(), res.elapsed_ms);
                    per_source.push(res.detections);
                }
                Err(_) => per_source.push(Vec::new()),
            }
        }
        for d in detectors.iter_mut() {
            summary.detector_faults.insert(d.id().to_string(), d.faults());
            if d.take_degraded_notice() {
                summary.degraded.push(d.id().to_string());
                let follow = engine.on_notice(&format!(
                    "Detector {} went offline after {} restarts; continuing without it",
                    d.id(),
                    d.restarts()
                ));
                sinks.dispatch(&follow, &mut engine, &mut summary);
            }
        }
        if detectors.iter().all(|d| d.health() == Health::Degraded) {
            let follow = engine.on_notice("All detectors are offline; monitoring has stopped");
            sinks.dispatch(&follow, &mut engine, &mut summary);
            failure = Some(AppError::Runtime("all detectors are offline".into()));
            break;
        }

        let refs: Vec<&[Detection]> = per_source.iter().map(Vec::as_slice).collect();
        let mut fused = match fuse_many(&frame.frame_id, &refs, &cfg.fusion) {
            Ok(f) => f,
            Err(e) => {
                failure = Some(AppError::Runtime(e.to_string()));
                break;
            }
        };
        fused.per_source_latency = latency;
        let actions = engine.on_frame(&fused, &frame);
        sinks.dispatch(&actions, &mut engine, &mut summary);
    }

    // commands that arrived after the last frame still count
    if failure.is_none() && !env.shutdown.load(Ordering::SeqCst) {
        handle_commands(&mut inbound, &mut sinks, &mut engine, &mut summary);
    }

    drop(source);
    stop_detectors(&mut detectors);
    inbound.close();
    let last = engine.shutdown();
    sinks.dispatch(&last, &mut engine, &mut summary);
    sinks.close();
    summary.delivery_failures = *failures.lock().expect("failure count");

    if let Some(mock) = own_mock {
        let path = out_dir.join("outbox.jsonl");
        let mut text = String::new();
        for call in mock.calls() {
            text.push_str(&serde_json::to_string(&call).expect("calls serialize"));
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))?;
        summary.outbox = Some(path);
    }
    if failure.is_none() {
        if let Some(m) = sinks.fatal() {
            failure = Some(AppError::Runtime(m));
        }
    }
    info!(frames = summary.frames, alerts = summary.alerts, "monitoring finished");
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn handle_commands(inbound: &mut Inbound, sinks: &mut Sinks, engine: &mut Engine, summary: &mut MonitorSummary) {
    let fatal = sinks.fatal.clone();
    for cmd in inbound.drain(&fatal) {
        summary.commands += 1;
        let (actions, ack) = engine.on_command(&cmd);
        sinks.dispatch(&actions, engine, summary);
        sinks.send_text(ack.text());
    }
}
