use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use image::RgbImage;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::video::{VideoMeta, VideoSource};
use super::BackendError;
use crate::grounding::Detection;
use crate::time::Interval;

/// Body of `POST /detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub classes: Vec<String>,
    pub tau_c: f64,
    pub tau_nms: f64,
    /// Base64-encoded PNG images.
    pub frames: Vec<String>,
}

/// Body answered by `POST /detect`: one detection list per request frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<Vec<Detection>>,
}

/// Everything that determines the detections over a video, apart from the
/// video content itself. Used as part of the transcript key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionQuery {
    pub stride: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Interval>,
    pub classes: Vec<String>,
    pub tau_c: f64,
    pub tau_nms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub timestamp_s: f64,
    pub detections: Vec<Detection>,
}

pub trait DetectionTransport: Send + Sync {
    fn detect(&self, request: &DetectRequest) -> Result<DetectResponse, BackendError>;
    fn health(&self) -> Result<Value, BackendError>;
}

/// Client for the detection service.
pub struct HttpDetectionTransport {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpDetectionTransport {
    pub fn new(endpoint: &str, timeout_s: u64) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_s))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            client,
        })
    }

    fn check(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, BackendError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().unwrap_or_default();
        Err(match status {
            StatusCode::SERVICE_UNAVAILABLE => BackendError::DetectorUnavailable(body),
            StatusCode::BAD_REQUEST | StatusCode::UNPROCESSABLE_ENTITY => {
                BackendError::ClassListRejected(body)
            }
            _ => BackendError::Transport(format!("{status}: {body}")),
        })
    }
}

fn unavailable(e: reqwest::Error) -> BackendError {
    BackendError::DetectorUnavailable(e.to_string())
}

impl DetectionTransport for HttpDetectionTransport {
    fn detect(&self, request: &DetectRequest) -> Result<DetectResponse, BackendError> {
        let resp = self
            .client
            .post(format!("{}/detect", self.base))
            .json(request)
            .send()
            .map_err(unavailable)?;
        Self::check(resp)?
            .json()
            .map_err(|e| BackendError::Transport(format!("bad detect response: {e}")))
    }

    fn health(&self) -> Result<Value, BackendError> {
        let resp = self
            .client
            .get(format!("{}/health", self.base))
            .send()
            .map_err(unavailable)?;
        Self::check(resp)?
            .json()
            .map_err(|e| BackendError::Transport(format!("bad health response: {e}")))
    }
}

fn encode_png(image: &RgbImage) -> Result<String, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| BackendError::InvalidRequest(format!("cannot encode frame: {e}")))?;
    Ok(BASE64.encode(buf.into_inner()))
}

fn valid_threshold(t: f64) -> bool {
    t > 0.0 && t <= 1.0
}

/// Runs the detector over a batch of frames. The result has one entry per
/// frame, in frame order.
pub fn detect_batch(
    transport: &dyn DetectionTransport,
    frames: &[RgbImage],
    classes: &[String],
    tau_c: f64,
    tau_nms: f64,
) -> Result<Vec<Vec<Detection>>, BackendError> {
    if classes.is_empty() {
        return Err(BackendError::InvalidRequest("class list is empty".into()));
    }
    if !valid_threshold(tau_c) || !valid_threshold(tau_nms) {
        return Err(BackendError::InvalidRequest(format!(
            "thresholds must be in (0,1], got tau_c={tau_c} tau_nms={tau_nms}"
        )));
    }
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let request = DetectRequest {
        classes: classes.to_vec(),
        tau_c,
        tau_nms,
        frames: frames.iter().map(encode_png).collect::<Result<_, _>>()?,
    };
    let response = transport.detect(&request)?;
    if response.detections.len() != frames.len() {
        return Err(BackendError::Transport(format!(
            "detector answered {} frames for {} sent",
            response.detections.len(),
            frames.len()
        )));
    }
    Ok(response.detections)
}

/// Detections over a whole video (or a window of it).
pub trait VideoDetector: Send + Sync {
    fn detect_video(
        &self,
        video: &VideoMeta,
        query: &DetectionQuery,
    ) -> Result<Vec<FrameDetections>, BackendError>;
}

/// Decodes frames and ships them to the detection service in batches.
pub struct LiveVideoDetector {
    video: Arc<dyn VideoSource>,
    transport: Arc<dyn DetectionTransport>,
    batch_size: usize,
}

impl LiveVideoDetector {
    pub fn new(
        video: Arc<dyn VideoSource>,
        transport: Arc<dyn DetectionTransport>,
        batch_size: usize,
    ) -> Self {
        Self {
            video,
            transport,
            batch_size: batch_size.max(1),
        }
    }

    fn flush(
        &self,
        batch: &mut Vec<(f64, RgbImage)>,
        query: &DetectionQuery,
        out: &mut Vec<FrameDetections>,
    ) -> Result<(), BackendError> {
        let images: Vec<RgbImage> = batch.iter().map(|(_, img)| img.clone()).collect();
        let dets = detect_batch(
            self.transport.as_ref(),
            &images,
            &query.classes,
            query.tau_c,
            query.tau_nms,
        )?;
        out.extend(batch.drain(..).zip(dets).map(|((t, _), detections)| FrameDetections {
            timestamp_s: t,
            detections,
        }));
        Ok(())
    }
}

impl VideoDetector for LiveVideoDetector {
    fn detect_video(
        &self,
        video: &VideoMeta,
        query: &DetectionQuery,
    ) -> Result<Vec<FrameDetections>, BackendError> {
        let mut out = Vec::new();
        let mut batch = Vec::with_capacity(self.batch_size);
        for frame in self.video.decode_frames(video, query.stride, query.window)? {
            let frame = frame?;
            batch.push((frame.timestamp_s, frame.image));
            if batch.len() == self.batch_size {
                self.flush(&mut batch, query, &mut out)?;
            }
        }
        if !batch.is_empty() {
            self.flush(&mut batch, query, &mut out)?;
        }
        Ok(out)
    }
}
