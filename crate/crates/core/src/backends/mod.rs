//! Access to everything outside the process: structured-output chat models,
//! the open-vocabulary detection service and the video decoder.
//!
//! Every interaction is content-addressed. In `record` mode results are
//! persisted to a [`TranscriptStore`]; in `replay` mode they are served from
//! it without touching any transport, which makes whole pipeline runs
//! reproducible offline.

mod detect;
pub mod mock;
mod model;
mod recorder;
mod schema;
mod store;
mod video;

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

pub use detect::{
    detect_batch, DetectRequest, DetectResponse, DetectionQuery, DetectionTransport,
    FrameDetections, HttpDetectionTransport, LiveVideoDetector, VideoDetector,
};
pub use model::{
    HttpModelTransport, MediaRef, ModelClient, ModelRequest, ModelResponse, ModelTransport,
    Traced, WireRequest,
};
pub use recorder::Recorder;
pub use schema::{parse_model_json, strict_schema, validate_against};
pub use store::{Transcript, TranscriptBody, TranscriptStore, VerifyIssue};
pub use video::{
    frame_schedule, sha256_file, Frame, FrameStream, VideoMeta, VideoSource, VideoTools,
};

use crate::config::EngineConfig;
use crate::time::Interval;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("{model_id}: output failed schema validation after {attempts} attempts: {last_error}")]
    SchemaViolationAfterRetries {
        model_id: String,
        attempts: u32,
        last_error: String,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded transcript for key {key}")]
    ReplayMiss { key: String },
    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("detector rejected class list: {0}")]
    ClassListRejected(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("no frames fall inside window {0}")]
    EmptyWindow(Interval),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transcript store: {0}")]
    Store(String),
}

/// The bundle of backends one pipeline run needs.
#[derive(Clone)]
pub struct Backends {
    pub models: ModelClient,
    pub detector: Arc<dyn VideoDetector>,
    pub video: Arc<dyn VideoSource>,
    pub recorder: Recorder,
}

impl Backends {
    pub fn new(
        models: ModelClient,
        detector: Arc<dyn VideoDetector>,
        video: Arc<dyn VideoSource>,
        recorder: Recorder,
    ) -> Self {
        Self {
            models,
            detector,
            video,
            recorder,
        }
    }

    /// Live HTTP backends wired from configuration, with the store and mode
    /// taken from `cfg.cache_dir` / `cfg.replay_mode`.
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, BackendError> {
        let recorder = Recorder::from_config(cfg)?;
        let tools: Arc<dyn VideoSource> =
            Arc::new(VideoTools::new(&cfg.decoder_path, &cfg.probe_path));
        let transport: Arc<dyn ModelTransport> = Arc::new(HttpModelTransport::new(
            &cfg.llm_endpoint,
            cfg.api_key.clone(),
            cfg.request_timeout_s,
        )?);
        let models = ModelClient::new(transport, recorder.clone(), cfg.repair_retries)
            .with_trimmer(tools.clone());
        let detection: Arc<dyn DetectionTransport> = Arc::new(HttpDetectionTransport::new(
            &cfg.detector_endpoint,
            cfg.request_timeout_s,
        )?);
        let detector: Arc<dyn VideoDetector> = Arc::new(LiveVideoDetector::new(
            tools.clone(),
            detection,
            cfg.detect_batch_size,
        ));
        Ok(Self::new(models, detector, tools, recorder))
    }

    /// Fingerprints and probes a video, going through the transcript store.
    pub fn open_video(&self, path: &Path) -> Result<VideoMeta, BackendError> {
        let sha256 = sha256_file(path)?;
        let key = recorder::probe_key(&sha256);
        let video = self.video.clone();
        let (meta, _) = self.recorder.through(
            &key,
            |body| match body {
                TranscriptBody::Probe { meta, .. } => Some(meta.clone()),
                _ => None,
            },
            || {
                let meta = video.probe(path, &sha256)?;
                let body = TranscriptBody::Probe {
                    sha256: sha256.clone(),
                    meta: meta.clone(),
                };
                Ok((meta, body))
            },
        )?;
        // the recorded path may come from another machine
        Ok(VideoMeta {
            path: path.to_path_buf(),
            ..meta
        })
    }

    /// Per-frame detections over a video, going through the transcript store.
    pub fn detect_video(
        &self,
        video: &VideoMeta,
        query: &DetectionQuery,
    ) -> Result<Vec<FrameDetections>, BackendError> {
        let key = recorder::detection_key(&video.sha256, query);
        let detector = self.detector.clone();
        let (frames, _) = self.recorder.through(
            &key,
            |body| match body {
                TranscriptBody::Detection { frames, .. } => Some(frames.clone()),
                _ => None,
            },
            || {
                let frames = detector.detect_video(video, query)?;
                let body = TranscriptBody::Detection {
                    sha256: video.sha256.clone(),
                    query: query.clone(),
                    frames: frames.clone(),
                };
                Ok((frames, body))
            },
        )?;
        Ok(frames)
    }
}
