//! In-process test doubles for every backend. They count their invocations,
//! so a replay run can assert that nothing reached a transport.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::detect::{DetectionQuery, FrameDetections, VideoDetector};
use super::model::{ModelTransport, WireRequest};
use super::video::{frame_schedule, FrameStream, VideoMeta, VideoSource};
use super::BackendError;
use crate::grounding::Detection;
use crate::time::Interval;

type Responder = dyn Fn(&WireRequest) -> Result<String, BackendError> + Send + Sync;

enum Script {
    Queue(Mutex<VecDeque<String>>),
    Responder(Box<Responder>),
}

/// Model transport answering from a script.
pub struct ScriptedModel {
    script: Script,
    log: Mutex<Vec<WireRequest>>,
}

impl ScriptedModel {
    /// Answers with the given texts in order; errors once they run out.
    pub fn queue<I, S>(responses: I) -> Arc<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Arc::new(Self {
            script: Script::Queue(Mutex::new(responses.into_iter().map(Into::into).collect())),
            log: Mutex::new(Vec::new()),
        })
    }

    /// Answers every request with `f`.
    pub fn responder(
        f: impl Fn(&WireRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Arc<Self> {
        Arc::new(Self {
            script: Script::Responder(Box::new(f)),
            log: Mutex::new(Vec::new()),
        })
    }

    /// A transport that must never be reached.
    pub fn offline() -> Arc<Self> {
        Self::queue(Vec::<String>::new())
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().iter().map(|r| r.prompt.clone()).collect()
    }

    pub fn requests(&self) -> Vec<WireRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl ModelTransport for ScriptedModel {
    fn complete(&self, request: &WireRequest) -> Result<String, BackendError> {
        self.log.lock().unwrap().push(request.clone());
        match &self.script {
            Script::Queue(q) => q
                .lock()
                .unwrap()
                .pop_front()
                .ok_or_else(|| BackendError::Transport("scripted model has no more responses".into())),
            Script::Responder(f) => f(request),
        }
    }
}

type DetectFn = dyn Fn(f64, &[String]) -> Vec<Detection> + Send + Sync;

/// Detector whose output depends only on the frame timestamp. Frames follow
/// the real schedule for the query's stride and window.
pub struct ScriptedDetector {
    f: Box<DetectFn>,
    calls: AtomicUsize,
}

impl ScriptedDetector {
    pub fn new(f: impl Fn(f64, &[String]) -> Vec<Detection> + Send + Sync + 'static) -> Arc<Self> {
        Arc::new(Self {
            f: Box::new(f),
            calls: AtomicUsize::new(0),
        })
    }

    /// A detector that must never be reached.
    pub fn offline() -> Arc<Self> {
        Self::new(|_, _| Vec::new())
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VideoDetector for ScriptedDetector {
    fn detect_video(
        &self,
        video: &VideoMeta,
        query: &DetectionQuery,
    ) -> Result<Vec<FrameDetections>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let schedule = frame_schedule(video, query.stride, query.window);
        if schedule.is_empty() {
            if let Some(w) = query.window {
                return Err(BackendError::EmptyWindow(w));
            }
        }
        Ok(schedule
            .into_iter()
            .map(|(_, t)| FrameDetections {
                timestamp_s: t,
                detections: (self.f)(t, &query.classes),
            })
            .collect())
    }
}

/// Video source that reports fixed properties for any file and never runs
/// an external process.
pub struct StubVideo {
    fps: f64,
    frame_count: u64,
    width: u32,
    height: u32,
    calls: AtomicUsize,
}

impl StubVideo {
    pub fn new(fps: f64, frame_count: u64) -> Arc<Self> {
        Arc::new(Self {
            fps,
            frame_count,
            width: 64,
            height: 48,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VideoSource for StubVideo {
    fn probe(&self, path: &Path, sha256: &str) -> Result<VideoMeta, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(VideoMeta {
            path: path.to_path_buf(),
            fps: self.fps,
            frame_count: self.frame_count,
            duration_s: self.frame_count as f64 / self.fps,
            width: self.width,
            height: self.height,
            sha256: sha256.to_string(),
        })
    }

    fn decode_frames(
        &self,
        _video: &VideoMeta,
        _stride: u32,
        _window: Option<Interval>,
    ) -> Result<FrameStream, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(BackendError::Decode("stub video source cannot decode".into()))
    }

    fn trim(&self, _path: &Path, _window: Interval) -> Result<tempfile::TempPath, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        tempfile::NamedTempFile::new()
            .map(|f| f.into_temp_path())
            .map_err(|e| BackendError::Decode(e.to_string()))
    }
}
