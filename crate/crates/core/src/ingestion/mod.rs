//! Frame sources: image directories, video files and live cameras.
//!
//! Video files and cameras are decoded by an external media tool (ffmpeg by
//! default) writing an MJPEG stream to stdout; frames are materialized into a
//! bounded spool directory because detectors receive frames by path.

mod jpeg;
mod spool;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::clock::{Clock, Millis};
use crate::geometry::FrameId;

pub use jpeg::JpegSplitter;
pub use spool::{Spool, SpoolLease};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source {0} does not exist")]
    Missing(String),
    #[error("cannot open source {uri}: {reason}")]
    Open { uri: String, reason: String },
    #[error("unsupported container {0:?}")]
    Unsupported(String),
    #[error("stream fault on {uri}: {reason}")]
    Fault {
        uri: String,
        reason: String,
        diagnostics: String,
    },
    #[error("invalid source config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    ImageDir,
    VideoFile,
    Camera,
}

fn default_sample() -> u64 {
    1
}
fn default_spool_cap() -> usize {
    32
}
fn default_spool_dir() -> PathBuf {
    std::env::temp_dir().join("sentinel-spool")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub program: String,
    /// Arguments for video files; `{uri}` is replaced by the source path.
    pub video_args: Vec<String>,
    /// Arguments for cameras; `{uri}` is replaced by the device.
    pub camera_args: Vec<String>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let tail = ["-f", "image2pipe", "-vcodec", "mjpeg", "-q:v", "3", "-"];
        let mut video: Vec<String> = ["-hide_banner", "-loglevel", "error", "-i", "{uri}"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        video.extend(tail.iter().map(|s| s.to_string()));
        let mut camera: Vec<String> = ["-hide_banner", "-loglevel", "error", "-f", "v4l2", "-i", "{uri}"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        camera.extend(tail.iter().map(|s| s.to_string()));
        Self {
            program: "ffmpeg".into(),
            video_args: video,
            camera_args: camera,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub uri: String,
    /// Inferred from `uri` when absent: directories are image sources,
    /// `/dev/...` paths are cameras, anything else is a video file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SourceKind>,
    #[serde(default = "default_sample")]
    pub sample_every_n: u64,
    #[serde(default = "default_spool_dir")]
    pub spool_dir: PathBuf,
    #[serde(default = "default_spool_cap")]
    pub spool_cap: usize,
    #[serde(default)]
    pub decoder: DecoderConfig,
}

impl SourceConfig {
    pub fn new(uri: impl Into<String>) -> Self {
        Self {
            uri: uri.into(),
            kind: None,
            sample_every_n: 1,
            spool_dir: default_spool_dir(),
            spool_cap: default_spool_cap(),
            decoder: DecoderConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.sample_every_n < 1 {
            return Err(IngestError::Config("sample_every_n must be >= 1".into()));
        }
        if self.spool_cap < 1 {
            return Err(IngestError::Config("spool_cap must be >= 1".into()));
        }
        if self.uri.trim().is_empty() {
            return Err(IngestError::Config("uri is empty".into()));
        }
        Ok(())
    }

    pub fn resolved_kind(&self) -> SourceKind {
        self.kind.unwrap_or_else(|| {
            let p = Path::new(&self.uri);
            if p.is_dir() {
                SourceKind::ImageDir
            } else if self.uri.starts_with("/dev/") {
                SourceKind::Camera
            } else {
                SourceKind::VideoFile
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame_id: FrameId,
    /// 1-based delivery sequence number; strictly increasing per source.
    pub seq: u64,
    /// 0-based index of the frame in the underlying source before sampling.
    pub source_index: u64,
    pub timestamp: Millis,
    pub image_path: PathBuf,
    pub source_kind: SourceKind,
    /// Present for spooled frames; holding it keeps the file from eviction.
    pub lease: Option<SpoolLease>,
}

pub fn frame_id_for(seq: u64) -> FrameId {
    FrameId::new(format!("f{seq:03}")).expect("generated ids are tokens")
}

pub trait FrameSource: Send {
    fn kind(&self) -> SourceKind;
    /// The next sampled frame, `Ok(None)` at end of stream. Camera sources block
    /// until a frame is available.
    fn next_frame(&mut self) -> Result<Option<FrameRecord>, IngestError>;
}

const IMAGE_EXTS: &[&str] = &["jpg", "jpeg", "png", "bmp"];
const VIDEO_EXTS: &[&str] = &["mp4", "avi", "mkv", "mov", "webm", "mjpeg", "mjpg", "h264", "m4v"];

pub fn open_source(cfg: &SourceConfig, clock: Arc<dyn Clock>) -> Result<Box<dyn FrameSource>, IngestError> {
    cfg.validate()?;
    match cfg.resolved_kind() {
        SourceKind::ImageDir => Ok(Box::new(DirectorySource::open(cfg, clock)?)),
        SourceKind::VideoFile => Ok(Box::new(DecodedSource::open_video(cfg, clock)?)),
        SourceKind::Camera => Ok(Box::new(CameraSource::open(cfg, clock)?)),
    }
}

/// Lists the image files of a directory in lexicographic file-name order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if !dir.is_dir() {
        return Err(IngestError::Missing(dir.display().to_string()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

pub struct DirectorySource {
    files: Vec<PathBuf>,
    next: usize,
    step: usize,
    seq: u64,
    clock: Arc<dyn Clock>,
}

impl DirectorySource {
    pub fn open(cfg: &SourceConfig, clock: Arc<dyn Clock>) -> Result<Self, IngestError> {
        Ok(Self {
            files: list_images(Path::new(&cfg.uri))?,
            next: 0,
            step: cfg.sample_every_n as usize,
            seq: 0,
            clock,
        })
    }

    pub fn len(&self) -> usize {
        self.files.len().div_ceil(self.step)
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for DirectorySource {
    fn kind(&self) -> SourceKind {
        SourceKind::ImageDir
    }

    fn next_frame(&mut self) -> Result<Option<FrameRecord>, IngestError> {
        let Some(path) = self.files.get(self.next).cloned() else {
            return Ok(None);
        };
        let index = self.next as u64;
        self.next += self.step;
        if !path.is_file() {
            return Err(IngestError::Missing(path.display().to_string()));
        }
        self.seq += 1;
        Ok(Some(FrameRecord {
            frame_id: frame_id_for(self.seq),
            seq: self.seq,
            source_index: index,
            timestamp: self.clock.now_ms(),
            image_path: path,
            source_kind: SourceKind::ImageDir,
            lease: None,
        }))
    }
}

fn spawn_decoder(
    cfg: &SourceConfig,
    args: &[String],
) -> Result<(Child, Arc<Mutex<String>>), IngestError> {
    let args: Vec<String> = args.iter().map(|a| a.replace("{uri}", &cfg.uri)).collect();
    let mut child = Command::new(&cfg.decoder.program)
        .args(&args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| IngestError::Open {
            uri: cfg.uri.clone(),
            reason: format!("cannot run decoder {:?}: {e}", cfg.decoder.program),
        })?;
    let stderr = Arc::new(Mutex::new(String::new()));
    let sink = stderr.clone();
    let mut pipe = child.stderr.take().expect("piped stderr");
    thread::spawn(move || {
        let mut s = String::new();
        let _ = pipe.read_to_string(&mut s);
        sink.lock().expect("stderr").push_str(&s);
    });
    Ok((child, stderr))
}

/// Pull-based, lossless decoding of a video file.
pub struct DecodedSource {
    uri: String,
    child: Child,
    stderr: Arc<Mutex<String>>,
    frames: JpegSplitter<std::process::ChildStdout>,
    spool: Spool,
    step: u64,
    decoded: u64,
    seq: u64,
    clock: Arc<dyn Clock>,
    done: bool,
}

impl DecodedSource {
    pub fn open_video(cfg: &SourceConfig, clock: Arc<dyn Clock>) -> Result<Self, IngestError> {
        let path = Path::new(&cfg.uri);
        if !path.is_file() {
            return Err(IngestError::Missing(cfg.uri.clone()));
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        if !VIDEO_EXTS.contains(&ext.as_str()) {
            return Err(IngestError::Unsupported(ext));
        }
        let (mut child, stderr) = spawn_decoder(cfg, &cfg.decoder.video_args)?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            uri: cfg.uri.clone(),
            child,
            stderr,
            frames: JpegSplitter::new(stdout),
            spool: Spool::new(&cfg.spool_dir, cfg.spool_cap)?,
            step: cfg.sample_every_n,
            decoded: 0,
            seq: 0,
            clock,
            done: false,
        })
    }

    fn fault(&self, reason: String) -> IngestError {
        IngestError::Fault {
            uri: self.uri.clone(),
            reason,
            diagnostics: self.stderr.lock().expect("stderr").clone(),
        }
    }
}

impl FrameSource for DecodedSource {
    fn kind(&self) -> SourceKind {
        SourceKind::VideoFile
    }

    fn next_frame(&mut self) -> Result<Option<FrameRecord>, IngestError> {
        if self.done {
            return Ok(None);
        }
        loop {
            let img = match self.frames.next_image() {
                Ok(Some(img)) => img,
                Ok(None) => {
                    self.done = true;
                    let status = self.child.wait()?;
                    if !status.success() {
                        // give the stderr collector a moment to finish
                        thread::sleep(std::time::Duration::from_millis(20));
                        return Err(self.fault(format!("decoder exited with {status}")));
                    }
                    return Ok(None);
                }
                Err(e) => {
                    self.done = true;
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return Err(self.fault(e.to_string()));
                }
            };
            let index = self.decoded;
            self.decoded += 1;
            if !index.is_multiple_of(self.step) {
                continue;
            }
            self.seq += 1;
            let frame_id = frame_id_for(self.seq);
            let (image_path, lease) = self.spool.admit(&frame_id, &img)?;
            return Ok(Some(FrameRecord {
                frame_id,
                seq: self.seq,
                source_index: index,
                timestamp: self.clock.now_ms(),
                image_path,
                source_kind: SourceKind::VideoFile,
                lease: Some(lease),
            }));
        }
    }
}

impl Drop for DecodedSource {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Default)]
struct Slot {
    latest: Option<(u64, Vec<u8>)>,
    /// Set when the reader stops: the fault description.
    ended: Option<String>,
    dropped: u64,
}

/// Live camera with a latest-wins buffer of depth one: frames that arrive
/// while the consumer is busy replace the pending one.
pub struct CameraSource {
    uri: String,
    child: Child,
    stderr: Arc<Mutex<String>>,
    shared: Arc<(Mutex<Slot>, Condvar)>,
    spool: Spool,
    seq: u64,
    clock: Arc<dyn Clock>,
}

impl CameraSource {
    pub fn open(cfg: &SourceConfig, clock: Arc<dyn Clock>) -> Result<Self, IngestError> {
        if !Path::new(&cfg.uri).exists() {
            return Err(IngestError::Open {
                uri: cfg.uri.clone(),
                reason: "device not found".into(),
            });
        }
        let (mut child, stderr) = spawn_decoder(cfg, &cfg.decoder.camera_args)?;
        let stdout = child.stdout.take().expect("piped stdout");
        let shared = Arc::new((Mutex::new(Slot::default()), Condvar::new()));
        let writer = shared.clone();
        let step = cfg.sample_every_n;
        thread::spawn(move || {
            let mut frames = JpegSplitter::new(stdout);
            let mut index = 0u64;
            let end = loop {
                match frames.next_image() {
                    Ok(Some(img)) => {
                        let i = index;
                        index += 1;
                        if !i.is_multiple_of(step) {
                            continue;
                        }
                        let (lock, cv) = &*writer;
                        let mut slot = lock.lock().expect("camera slot");
                        if slot.latest.replace((i, img)).is_some() {
                            slot.dropped += 1;
                        }
                        cv.notify_all();
                    }
                    Ok(None) => break "camera stream ended".to_string(),
                    Err(e) => break e.to_string(),
                }
            };
            let (lock, cv) = &*writer;
            lock.lock().expect("camera slot").ended = Some(end);
            cv.notify_all();
        });
        Ok(Self {
            uri: cfg.uri.clone(),
            child,
            stderr,
            shared,
            spool: Spool::new(&cfg.spool_dir, cfg.spool_cap)?,
            seq: 0,
            clock,
        })
    }

    /// Frames replaced before the consumer picked them up.
    pub fn dropped(&self) -> u64 {
        self.shared.0.lock().expect("camera slot").dropped
    }
}

impl FrameSource for CameraSource {
    fn kind(&self) -> SourceKind {
        SourceKind::Camera
    }

    fn next_frame(&mut self) -> Result<Option<FrameRecord>, IngestError> {
        let (lock, cv) = &*self.shared;
        let mut slot = lock.lock().expect("camera slot");
        loop {
            if let Some((index, img)) = slot.latest.take() {
                drop(slot);
                self.seq += 1;
                let frame_id = frame_id_for(self.seq);
                let (image_path, lease) = self.spool.admit(&frame_id, &img)?;
                return Ok(Some(FrameRecord {
                    frame_id,
                    seq: self.seq,
                    source_index: index,
                    timestamp: self.clock.now_ms(),
                    image_path,
                    source_kind: SourceKind::Camera,
                    lease: Some(lease),
                }));
            }
            if let Some(reason) = slot.ended.clone() {
                drop(slot);
                let _ = self.child.kill();
                let _ = self.child.wait();
                thread::sleep(std::time::Duration::from_millis(20));
                debug!(uri = %self.uri, "camera stream stopped");
                return Err(IngestError::Fault {
                    uri: self.uri.clone(),
                    reason,
                    diagnostics: self.stderr.lock().expect("stderr").clone(),
                });
            }
            slot = cv.wait(slot).expect("camera slot");
        }
    }
}

impl Drop for CameraSource {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn clock() -> Arc<dyn Clock> {
        Arc::new(ManualClock::new(0))
    }

    #[test]
    fn directory_order_and_sampling() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.jpg", "a.jpg", "c.png", "notes.txt", "d.JPG"] {
            std::fs::write(dir.path().join(name), b"x").unwrap();
        }
        let mut cfg = SourceConfig::new(dir.path().display().to_string());
        let mut src = open_source(&cfg, clock()).unwrap();
        assert_eq!(src.kind(), SourceKind::ImageDir);
        let mut names = Vec::new();
        while let Some(f) = src.next_frame().unwrap() {
            names.push((f.frame_id.to_string(), f.image_path.file_name().unwrap().to_str().unwrap().to_string()));
        }
        assert_eq!(
            names,
            vec![
                ("f001".into(), "a.jpg".into()),
                ("f002".into(), "b.jpg".into()),
                ("f003".into(), "c.png".into()),
                ("f004".into(), "d.JPG".into()),
            ]
        );
        assert!(src.next_frame().unwrap().is_none());

        cfg.sample_every_n = 3;
        let mut src = open_source(&cfg, clock()).unwrap();
        let idx: Vec<u64> = std::iter::from_fn(|| src.next_frame().unwrap()).map(|f| f.source_index).collect();
        assert_eq!(idx, vec![0, 3]);
    }

    #[test]
    fn open_errors() {
        let mut cfg = SourceConfig::new("/definitely/not/here.mp4");
        assert!(matches!(open_source(&cfg, clock()), Err(IngestError::Missing(_))));
        cfg.uri = "/dev/video-nonexistent-42".into();
        assert!(matches!(open_source(&cfg, clock()), Err(IngestError::Open { .. })));
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("clip.xyz");
        std::fs::write(&f, b"x").unwrap();
        cfg.uri = f.display().to_string();
        assert!(matches!(open_source(&cfg, clock()), Err(IngestError::Unsupported(_))));
        cfg.sample_every_n = 0;
        assert!(matches!(open_source(&cfg, clock()), Err(IngestError::Config(_))));
    }

    fn tiny_jpeg(shade: u8) -> Vec<u8> {
        let img = image::RgbImage::from_pixel(8, 6, image::Rgb([shade, 90, 30]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Jpeg).unwrap();
        out.into_inner()
    }

    /// A stand-in decoder: `sh stub.sh <stream file> <exit code>` dumps the
    /// prepared MJPEG stream and exits with the given status.
    fn stub_decoder(dir: &Path, frames: usize, exit: i32) -> (DecoderConfig, PathBuf) {
        let stream: Vec<u8> = (0..frames).flat_map(|i| tiny_jpeg((i * 7) as u8)).collect();
        let data = dir.join("stream.mjpeg");
        std::fs::write(&data, stream).unwrap();
        let script = dir.join("stub.sh");
        std::fs::write(&script, "cat \"$1\"\necho 'decoder says bye' >&2\nexit $2\n").unwrap();
        let args = vec![
            script.display().to_string(),
            data.display().to_string(),
            exit.to_string(),
        ];
        (
            DecoderConfig {
                program: "sh".into(),
                video_args: args.clone(),
                camera_args: args,
            },
            data,
        )
    }

    #[test]
    fn video_sampling_and_spool() {
        let dir = tempfile::tempdir().unwrap();
        let (decoder, _) = stub_decoder(dir.path(), 25, 0);
        let video = dir.path().join("clip.mp4");
        std::fs::write(&video, b"container").unwrap();
        let mut cfg = SourceConfig::new(video.display().to_string());
        cfg.decoder = decoder;
        cfg.sample_every_n = 10;
        cfg.spool_dir = dir.path().join("spool");
        let mut src = open_source(&cfg, clock()).unwrap();
        assert_eq!(src.kind(), SourceKind::VideoFile);
        let mut got = Vec::new();
        while let Some(f) = src.next_frame().unwrap() {
            assert!(f.image_path.is_file());
            assert_eq!(f.image_path, cfg.spool_dir.join(format!("{}.jpg", f.frame_id)));
            got.push((f.seq, f.source_index));
        }
        assert_eq!(got, vec![(1, 0), (2, 10), (3, 20)]);
    }

    #[test]
    fn decoder_failure_is_a_fault_not_end_of_stream() {
        let dir = tempfile::tempdir().unwrap();
        let (decoder, _) = stub_decoder(dir.path(), 2, 3);
        let video = dir.path().join("clip.avi");
        std::fs::write(&video, b"container").unwrap();
        let mut cfg = SourceConfig::new(video.display().to_string());
        cfg.decoder = decoder;
        cfg.spool_dir = dir.path().join("spool");
        let mut src = open_source(&cfg, clock()).unwrap();
        assert!(src.next_frame().unwrap().is_some());
        assert!(src.next_frame().unwrap().is_some());
        match src.next_frame() {
            Err(IngestError::Fault { diagnostics, .. }) => assert!(diagnostics.contains("bye")),
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn camera_disconnect_is_a_fault() {
        let dir = tempfile::tempdir().unwrap();
        let (decoder, _) = stub_decoder(dir.path(), 3, 0);
        // any existing path stands in for the device node
        let device = dir.path().join("video0");
        std::fs::write(&device, b"").unwrap();
        let mut cfg = SourceConfig::new(device.display().to_string());
        cfg.kind = Some(SourceKind::Camera);
        cfg.decoder = decoder;
        cfg.spool_dir = dir.path().join("spool");
        let mut src = CameraSource::open(&cfg, clock()).unwrap();
        let mut delivered = 0u64;
        let err = loop {
            match src.next_frame() {
                Ok(Some(f)) => {
                    delivered += 1;
                    assert_eq!(f.seq, delivered);
                    assert!(f.image_path.is_file());
                }
                Ok(None) => panic!("camera streams never end cleanly"),
                Err(e) => break e,
            }
        };
        assert!(matches!(err, IngestError::Fault { .. }));
        assert!(delivered >= 1 && delivered + src.dropped() == 3);
    }
}
