use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendError;
use crate::time::Interval;

/// Probed properties of a video file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub path: PathBuf,
    pub fps: f64,
    pub frame_count: u64,
    pub duration_s: f64,
    pub width: u32,
    pub height: u32,
    /// Hex SHA-256 of the file bytes; identifies the media in transcript keys.
    pub sha256: String,
}

impl VideoMeta {
    /// Checks `fps > 0`, `frame_count > 0` and that the duration agrees with
    /// `frame_count / fps` to within one frame.
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.fps.is_finite() && self.fps > 0.0) || self.frame_count == 0 {
            return Err(BackendError::Decode(format!(
                "{}: invalid fps {} / frame count {}",
                self.path.display(),
                self.fps,
                self.frame_count
            )));
        }
        let expected = self.frame_count as f64 / self.fps;
        if (self.duration_s - expected).abs() > 1.0 / self.fps + 1e-9 {
            return Err(BackendError::Decode(format!(
                "{}: duration {} disagrees with {} frames at {} fps",
                self.path.display(),
                self.duration_s,
                self.frame_count,
                self.fps
            )));
        }
        Ok(())
    }

    pub fn timestamp_of(&self, index: u64) -> f64 {
        index as f64 / self.fps
    }
}

pub fn sha256_file(path: &Path) -> Result<String, BackendError> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| BackendError::Decode(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)
        .map_err(|e| BackendError::Decode(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(hasher.finalize()))
}

/// Frame indices and timestamps selected by `stride` (counted from frame 0)
/// and, when given, an inclusive time window.
pub fn frame_schedule(meta: &VideoMeta, stride: u32, window: Option<Interval>) -> Vec<(u64, f64)> {
    const EPS: f64 = 1e-9;
    let stride = stride.max(1) as u64;
    (0..meta.frame_count)
        .step_by(stride as usize)
        .map(|i| (i, meta.timestamp_of(i)))
        .filter(|&(_, t)| {
            window.is_none_or(|w| t >= w.start_s() - EPS && t <= w.end_s() + EPS)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u64,
    pub timestamp_s: f64,
    pub image: RgbImage,
}

/// Video I/O the pipeline needs.
pub trait VideoSource: Send + Sync {
    fn probe(&self, path: &Path, sha256: &str) -> Result<VideoMeta, BackendError>;
    fn decode_frames(
        &self,
        video: &VideoMeta,
        stride: u32,
        window: Option<Interval>,
    ) -> Result<FrameStream, BackendError>;
    /// Cuts `window` out of the file into a temporary copy.
    fn trim(&self, path: &Path, window: Interval) -> Result<tempfile::TempPath, BackendError>;
}

/// Drives external ffmpeg-compatible executables: a decoder that writes
/// `rgb24` raw video to stdout, and a prober that prints stream info as JSON.
#[derive(Debug, Clone)]
pub struct VideoTools {
    decoder: PathBuf,
    prober: PathBuf,
}

#[derive(Deserialize)]
struct ProbeOutput {
    streams: Vec<ProbeStream>,
}

#[derive(Deserialize)]
struct ProbeStream {
    width: u32,
    height: u32,
    r_frame_rate: String,
    #[serde(default)]
    nb_frames: Option<String>,
    #[serde(default)]
    duration: Option<String>,
}

fn parse_rate(rate: &str) -> Option<f64> {
    match rate.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => rate.trim().parse().ok(),
    }
}

impl VideoTools {
    pub fn new(decoder: impl Into<PathBuf>, prober: impl Into<PathBuf>) -> Self {
        Self {
            decoder: decoder.into(),
            prober: prober.into(),
        }
    }

    fn run_probe(&self, path: &Path) -> Result<ProbeStream, BackendError> {
        let out = Command::new(&self.prober)
            .args(["-v", "error", "-select_streams", "v:0", "-show_entries"])
            .arg("stream=width,height,r_frame_rate,nb_frames,duration")
            .args(["-of", "json"])
            .arg(path)
            .output()
            .map_err(|e| BackendError::Decode(format!("cannot run {}: {e}", self.prober.display())))?;
        if !out.status.success() {
            return Err(BackendError::Decode(format!(
                "{}: {}",
                path.display(),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let parsed: ProbeOutput = serde_json::from_slice(&out.stdout)
            .map_err(|e| BackendError::Decode(format!("unreadable probe output: {e}")))?;
        parsed
            .streams
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Decode(format!("{}: no video stream", path.display())))
    }
}

impl VideoSource for VideoTools {
    fn probe(&self, path: &Path, sha256: &str) -> Result<VideoMeta, BackendError> {
        let s = self.run_probe(path)?;
        let fps = parse_rate(&s.r_frame_rate)
            .filter(|f| *f > 0.0)
            .ok_or_else(|| BackendError::Decode(format!("bad frame rate {:?}", s.r_frame_rate)))?;
        let duration: Option<f64> = s.duration.as_deref().and_then(|d| d.parse().ok());
        let frame_count = s
            .nb_frames
            .as_deref()
            .and_then(|n| n.parse().ok())
            .or_else(|| duration.map(|d| (d * fps).round() as u64))
            .ok_or_else(|| BackendError::Decode("probe reported neither frames nor duration".into()))?;
        let meta = VideoMeta {
            path: path.to_path_buf(),
            fps,
            frame_count,
            duration_s: duration.unwrap_or(frame_count as f64 / fps),
            width: s.width,
            height: s.height,
            sha256: sha256.to_string(),
        };
        meta.validate()?;
        Ok(meta)
    }

    fn decode_frames(
        &self,
        video: &VideoMeta,
        stride: u32,
        window: Option<Interval>,
    ) -> Result<FrameStream, BackendError> {
        if stride == 0 {
            return Err(BackendError::InvalidRequest("stride must be at least 1".into()));
        }
        let schedule = frame_schedule(video, stride, window);
        if schedule.is_empty() {
            if let Some(w) = window {
                return Err(BackendError::EmptyWindow(w));
            }
        }
        let mut child = Command::new(&self.decoder)
            .args(["-v", "error", "-i"])
            .arg(&video.path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| BackendError::Decode(format!("cannot run {}: {e}", self.decoder.display())))?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(FrameStream {
            child,
            stdout,
            width: video.width,
            height: video.height,
            fps: video.fps,
            next_index: 0,
            schedule: schedule.into_iter().map(|(i, _)| i).collect(),
            cursor: 0,
        })
    }

    fn trim(&self, path: &Path, window: Interval) -> Result<tempfile::TempPath, BackendError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("mp4");
        let out = tempfile::Builder::new()
            .suffix(&format!(".{ext}"))
            .tempfile()
            .map_err(|e| BackendError::Decode(e.to_string()))?
            .into_temp_path();
        let status = Command::new(&self.decoder)
            .args(["-v", "error", "-y", "-ss"])
            .arg(format!("{:.3}", window.start_s()))
            .arg("-i")
            .arg(path)
            .arg("-t")
            .arg(format!("{:.3}", window.duration().max(0.001)))
            .args(["-c", "copy"])
            .arg(&*out)
            .status()
            .map_err(|e| BackendError::Decode(format!("cannot run {}: {e}", self.decoder.display())))?;
        if !status.success() {
            return Err(BackendError::Decode(format!("trimming {} failed", path.display())));
        }
        Ok(out)
    }
}

/// Decoded frames in timestamp order. Single consumer; the decoder process
/// is killed when the stream is dropped.
pub struct FrameStream {
    child: Child,
    stdout: ChildStdout,
    width: u32,
    height: u32,
    fps: f64,
    next_index: u64,
    schedule: Vec<u64>,
    cursor: usize,
}

impl Iterator for FrameStream {
    type Item = Result<Frame, BackendError>;

    fn next(&mut self) -> Option<Self::Item> {
        let &wanted = self.schedule.get(self.cursor)?;
        let frame_len = self.width as usize * self.height as usize * 3;
        let mut buf = vec![0u8; frame_len];
        while self.next_index <= wanted {
            if let Err(e) = self.stdout.read_exact(&mut buf) {
                self.cursor = self.schedule.len();
                return Some(Err(BackendError::Decode(format!(
                    "decoder ended before frame {wanted}: {e}"
                ))));
            }
            self.next_index += 1;
        }
        self.cursor += 1;
        let image = RgbImage::from_raw(self.width, self.height, buf).expect("buffer sized to frame");
        Some(Ok(Frame {
            index: wanted,
            timestamp_s: wanted as f64 / self.fps,
            image,
        }))
    }
}

impl Drop for FrameStream {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
