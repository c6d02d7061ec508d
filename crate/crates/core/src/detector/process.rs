//! Detector backed by an external adapter process.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use tracing::{debug, warn};

use crate::geometry::{DetectorId, FrameId};

use super::protocol::{absolute, AdapterMessage, HostMessage};
use super::{Detector, DetectorError, InferenceResult};

const STDERR_KEEP: usize = 40;
const QUIT_GRACE: Duration = Duration::from_secs(2);

pub struct ProcessDetector {
    id: DetectorId,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<VecDeque<String>>>,
    infer_timeout: Duration,
    served: u64,
    adapter_name: String,
    exited: Option<ExitStatus>,
}

fn spawn_stderr_collector<R: Read + Send + 'static>(r: R, sink: Arc<Mutex<VecDeque<String>>>) {
    thread::spawn(move || {
        for line in BufReader::new(r).lines().map_while(Result::ok) {
            let mut buf = sink.lock().expect("stderr buffer");
            if buf.len() == STDERR_KEEP {
                buf.pop_front();
            }
            buf.push_back(line);
        }
    });
}

impl ProcessDetector {
    pub fn spawn(
        id: DetectorId,
        program: &str,
        args: &[String],
        startup_timeout: Duration,
        infer_timeout: Duration,
    ) -> Result<Self, DetectorError> {
        let startup_err = |reason: String, diagnostics: String| DetectorError::Startup {
            detector: id.to_string(),
            reason,
            diagnostics,
        };
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| startup_err(format!("cannot spawn {program:?}: {e}"), String::new()))?;

        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = Arc::new(Mutex::new(VecDeque::new()));
        spawn_stderr_collector(child.stderr.take().expect("piped stderr"), stderr.clone());

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });

        let mut det = Self {
            id: id.clone(),
            stdin: child.stdin.take(),
            child: Some(child),
            lines: rx,
            stderr,
            infer_timeout,
            served: 0,
            adapter_name: String::new(),
            exited: None,
        };

        match det.lines.recv_timeout(startup_timeout) {
            Ok(Ok(line)) => match AdapterMessage::parse(&line) {
                Ok(AdapterMessage::Ready(name)) => {
                    debug!(detector = %id, adapter = %name, "adapter ready");
                    det.adapter_name = name;
                    Ok(det)
                }
                Ok(other) => {
                    det.kill();
                    Err(startup_err(
                        format!("expected READY, got {:?}", other.to_string()),
                        det.diagnostics(),
                    ))
                }
                Err(e) => {
                    det.kill();
                    Err(startup_err(format!("bad READY line: {e}"), det.diagnostics()))
                }
            },
            Ok(Err(e)) => {
                det.kill();
                Err(startup_err(format!("reading stdout: {e}"), det.diagnostics()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = det.wait_exit(Duration::from_millis(500));
                let reason = match status {
                    Some(s) => format!("adapter exited before READY ({s})"),
                    None => "adapter closed stdout before READY".to_string(),
                };
                det.kill();
                Err(startup_err(reason, det.diagnostics()))
            }
            Err(RecvTimeoutError::Timeout) => {
                det.kill();
                Err(startup_err(
                    format!("no READY within {startup_timeout:?}"),
                    det.diagnostics(),
                ))
            }
        }
    }

    pub fn adapter_name(&self) -> &str {
        &self.adapter_name
    }

    /// Last lines the adapter wrote to stderr.
    pub fn diagnostics(&self) -> String {
        // give the collector thread a moment to drain a just-exited process
        thread::sleep(Duration::from_millis(20));
        let buf = self.stderr.lock().expect("stderr buffer");
        buf.iter().cloned().collect::<Vec<_>>().join("\n")
    }

    /// Exit status of the adapter once it has terminated.
    pub fn exit_status(&mut self) -> Option<ExitStatus> {
        if self.exited.is_none() {
            self.exited = self.child.as_mut().and_then(|c| c.try_wait().ok().flatten());
        }
        self.exited
    }

    fn wait_exit(&mut self, grace: Duration) -> Option<ExitStatus> {
        let child = self.child.as_mut()?;
        let deadline = Instant::now() + grace;
        loop {
            match child.try_wait() {
                Ok(Some(s)) => {
                    self.exited = Some(s);
                    return Some(s);
                }
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => return None,
            }
        }
    }

    fn kill(&mut self) {
        self.stdin.take();
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            if let Ok(s) = c.wait() {
                self.exited.get_or_insert(s);
            }
        }
    }

    fn fault(&self, frame_id: &FrameId, reason: String) -> DetectorError {
        DetectorError::Fault {
            detector: self.id.to_string(),
            frame_id: frame_id.to_string(),
            reason,
        }
    }
}

impl Detector for ProcessDetector {
    fn id(&self) -> &DetectorId {
        &self.id
    }

    fn infer(&mut self, frame_id: &FrameId, image: &Path) -> Result<InferenceResult, DetectorError> {
        let image = absolute(image).map_err(|e| self.fault(frame_id, e.to_string()))?;
        let start = Instant::now();
        let request = HostMessage::Infer {
            frame_id: frame_id.clone(),
            image,
        };
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(DetectorError::Stopped(self.id.to_string()));
        };
        writeln!(stdin, "{request}")
            .and_then(|_| stdin.flush())
            .map_err(|e| self.fault(frame_id, format!("writing request: {e}")))?;

        let deadline = start + self.infer_timeout;
        let mut detections = Vec::new();
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(self.fault(frame_id, format!("reading reply: {e}"))),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(self.fault(frame_id, "adapter exited mid-request".into()))
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(DetectorError::Timeout {
                        detector: self.id.to_string(),
                        frame_id: frame_id.to_string(),
                        after: self.infer_timeout,
                    })
                }
            };
            let msg = AdapterMessage::parse(&line)
                .map_err(|e| self.fault(frame_id, format!("protocol violation: {e}: {:?}", line.trim_end())))?;
            match msg {
                AdapterMessage::Det(d) if &d.frame_id == frame_id => {
                    detections.push(d.into_detection(&self.id))
                }
                AdapterMessage::End {
                    frame_id: f,
                    elapsed_ms,
                } if &f == frame_id => {
                    self.served += 1;
                    return Ok(InferenceResult {
                        frame_id: frame_id.clone(),
                        detections,
                        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
                        reported_ms: Some(elapsed_ms),
                    });
                }
                AdapterMessage::Err { frame_id: f, message } if &f == frame_id => {
                    return Err(self.fault(frame_id, message));
                }
                other => {
                    return Err(self.fault(
                        frame_id,
                        format!("protocol violation: unexpected {:?}", other.to_string()),
                    ))
                }
            }
        }
    }

    fn frames_served(&self) -> u64 {
        self.served
    }

    fn stop(&mut self) {
        let Some(mut stdin) = self.stdin.take() else {
            self.kill();
            return;
        };
        let _ = writeln!(stdin, "{}", HostMessage::Quit).and_then(|_| stdin.flush());
        drop(stdin);
        match self.wait_exit(QUIT_GRACE) {
            Some(status) => debug!(detector = %self.id, %status, "adapter exited"),
            None => warn!(detector = %self.id, "adapter ignored QUIT, killing"),
        }
        self.kill();
    }
}

impl Drop for ProcessDetector {
    fn drop(&mut self) {
        if self.child.is_some() {
            self.stop();
        }
    }
}
