use serde::{Deserialize, Serialize};

use super::GroundingError;
use crate::backends::FrameDetections;
use crate::time::{format_timeframe, Interval};

/// One continuous appearance of a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub interval: Interval,
    /// Most detections of the target seen in a single frame of this run.
    pub peak_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrack {
    pub target: String,
    pub appearances: Vec<Appearance>,
}

/// Appearance intervals per target, in target-list order. Every target is
/// present, possibly with no appearances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetTimeline {
    pub tracks: Vec<TargetTrack>,
}

impl TargetTimeline {
    pub fn get(&self, target: &str) -> Option<&[Appearance]> {
        self.tracks
            .iter()
            .find(|t| t.target == target)
            .map(|t| t.appearances.as_slice())
    }

    pub fn intervals(&self, target: &str) -> Option<Vec<Interval>> {
        self.get(target)
            .map(|apps| apps.iter().map(|a| a.interval).collect())
    }

    /// One line per target: `target: [<<..>>, <<..>>] (peak n)`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for track in &self.tracks {
            let frames: Vec<String> = track
                .appearances
                .iter()
                .map(|a| format_timeframe(&a.interval))
                .collect();
            let peak = track.appearances.iter().map(|a| a.peak_count).max().unwrap_or(0);
            out.push_str(&format!("{}: [{}] (peak {peak})\n", track.target, frames.join(", ")));
        }
        out
    }
}

/// Turns per-frame detections into appearance intervals.
///
/// For each target, the timestamps where it was detected are split into
/// maximal runs whose consecutive timestamps differ by less than `tau_t`;
/// each run `[first, last]` becomes one interval. A gap of exactly `tau_t`
/// closes the run. A single detection yields a zero-length interval.
pub fn consolidate_timeline(
    per_frame: &[FrameDetections],
    targets: &[String],
    tau_t: f64,
) -> Result<TargetTimeline, GroundingError> {
    if let Some(i) = per_frame
        .windows(2)
        .position(|w| !(w[0].timestamp_s < w[1].timestamp_s))
    {
        return Err(GroundingError::NonMonotonicTimestamps { index: i + 1 });
    }
    let tracks = targets
        .iter()
        .map(|target| {
            let mut appearances: Vec<Appearance> = Vec::new();
            let mut run: Option<(f64, f64, u32)> = None;
            for frame in per_frame {
                let count = frame
                    .detections
                    .iter()
                    .filter(|d| &d.class_name == target)
                    .count() as u32;
                if count == 0 {
                    continue;
                }
                let t = frame.timestamp_s;
                run = match run {
                    Some((start, last, peak)) if t - last < tau_t => {
                        Some((start, t, peak.max(count)))
                    }
                    Some(closed) => {
                        appearances.push(appearance(closed));
                        Some((t, t, count))
                    }
                    None => Some((t, t, count)),
                };
            }
            if let Some(closed) = run {
                appearances.push(appearance(closed));
            }
            TargetTrack {
                target: target.clone(),
                appearances,
            }
        })
        .collect();
    Ok(TargetTimeline { tracks })
}

fn appearance((start, end, peak_count): (f64, f64, u32)) -> Appearance {
    Appearance {
        interval: Interval::new(start, end).expect("runs are built from increasing timestamps"),
        peak_count,
    }
}
