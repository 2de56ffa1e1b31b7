//! Open-vocabulary object grounding.
//!
//! Frames go to the detector with the question's targets as the class
//! vocabulary; the per-frame detections are filtered, de-duplicated with NMS
//! and consolidated into appearance intervals per target, bridging absences
//! shorter than `tau_t`.

mod nms;
mod timeline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nms::{filter_confidence, nms};
pub use timeline::{consolidate_timeline, Appearance, TargetTimeline, TargetTrack};

use crate::backends::{BackendError, Backends, DetectionQuery, FrameDetections, VideoMeta};
use crate::config::EngineConfig;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("frame timestamps must be strictly increasing (violated at frame {index})")]
    NonMonotonicTimestamps { index: usize },
    #[error("no targets to ground")]
    NoTargets,
    #[error("invalid bounding box {0:?}")]
    InvalidBox([f64; 4]),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Axis-aligned box in pixels. On the wire it is `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GroundingError> {
        let all_finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !all_finite || x1 > x2 || y1 > y2 {
            return Err(GroundingError::InvalidBox([x1, y1, x2, y2]));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            // two degenerate boxes: identical ones fully overlap
            return if self == other { 1.0 } else { 0.0 };
        }
        inter / union
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GroundingError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.coords()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_name: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// The grounded-objects output: appearance timeline plus scan bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedObjects {
    pub timeline: TargetTimeline,
    pub frames_scanned: usize,
    pub fps_used: f64,
}

impl GroundedObjects {
    /// Used when grounding could not run at all.
    pub fn empty() -> Self {
        Self {
            timeline: TargetTimeline::default(),
            frames_scanned: 0,
            fps_used: 0.0,
        }
    }
}

/// Local safety pass over detector output: drops classes outside the
/// vocabulary, applies the confidence floor and per-class NMS. Returns the
/// cleaned frames and the number of foreign-class detections discarded.
pub fn clean_detections(
    frames: Vec<FrameDetections>,
    targets: &[String],
    tau_c: f64,
    tau_nms: f64,
) -> (Vec<FrameDetections>, usize) {
    let mut foreign = 0;
    let cleaned = frames
        .into_iter()
        .map(|frame| {
            let (known, unknown): (Vec<Detection>, Vec<Detection>) = frame
                .detections
                .into_iter()
                .partition(|d| targets.contains(&d.class_name));
            foreign += unknown.len();
            let kept = nms(&filter_confidence(&known, tau_c), tau_nms);
            FrameDetections {
                timestamp_s: frame.timestamp_s,
                detections: kept,
            }
        })
        .collect();
    (cleaned, foreign)
}

/// Runs detection over the whole video and builds the appearance timeline.
/// Also returns the number of detections discarded for naming a class that
/// was not requested.
pub fn ground_objects(
    backends: &Backends,
    video: &VideoMeta,
    targets: &[String],
    cfg: &EngineConfig,
) -> Result<(GroundedObjects, usize), GroundingError> {
    if targets.is_empty() {
        return Err(GroundingError::NoTargets);
    }
    let query = DetectionQuery {
        stride: cfg.frame_stride,
        window: None,
        classes: targets.to_vec(),
        tau_c: cfg.tau_c,
        tau_nms: cfg.tau_nms,
    };
    let frames = backends.detect_video(video, &query)?;
    let frames_scanned = frames.len();
    let (frames, foreign) = clean_detections(frames, targets, cfg.tau_c, cfg.tau_nms);
    if foreign > 0 {
        log::info!("discarded {foreign} detections of classes outside the target list");
    }
    let mut timeline = consolidate_timeline(&frames, targets, cfg.tau_t)?;
    for track in &mut timeline.tracks {
        for app in &mut track.appearances {
            app.interval = app.interval.clamp_to(video.duration_s);
        }
    }
    Ok((
        GroundedObjects {
            timeline,
            frames_scanned,
            fps_used: video.fps / cfg.frame_stride as f64,
        },
        foreign,
    ))
}
