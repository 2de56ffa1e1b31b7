//! Engine configuration and the on-disk config file.
//!
//! Resolution order is environment over file over built-in defaults. The
//! defaults for the three grounding thresholds, the target cap and the
//! clarification budget are the tuned values the method was evaluated with.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TAU_C: f64 = 0.05;
pub const DEFAULT_TAU_NMS: f64 = 0.1;
pub const DEFAULT_TAU_T: f64 = 1.5;
pub const DEFAULT_MAX_TARGETS: usize = 4;
pub const DEFAULT_MAX_CLARIFICATIONS: usize = 3;

pub const ENV_LLM_ENDPOINT: &str = "VIDQA_LLM_ENDPOINT";
pub const ENV_DETECTOR_ENDPOINT: &str = "VIDQA_DETECTOR_ENDPOINT";
pub const ENV_CACHE_DIR: &str = "VIDQA_CACHE_DIR";

/// How model and detector calls are served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    /// Every call goes to the endpoint; nothing is persisted.
    #[default]
    Live,
    /// Serve from the transcript store when present, otherwise call and persist.
    Record,
    /// Serve only from the transcript store; a miss is an error.
    Replay,
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplayMode::Live => "live",
            ReplayMode::Record => "record",
            ReplayMode::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Detector confidence floor (inclusive).
    pub tau_c: f64,
    /// Per-class IoU at or above which the weaker box is suppressed.
    pub tau_nms: f64,
    /// Absence in seconds that closes an appearance interval.
    pub tau_t: f64,
    pub frame_stride: u32,
    pub max_targets: usize,
    pub max_clarifications: usize,
    /// Padding around each clarification question's timeframe.
    pub clarification_pad_s: f64,
    /// Re-prompts allowed after a schema violation.
    pub repair_retries: u32,
    pub detect_batch_size: usize,
    pub video_llm_model: String,
    pub llm_model: String,
    pub judge_model: String,
    pub llm_endpoint: String,
    pub detector_endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub decoder_path: PathBuf,
    pub probe_path: PathBuf,
    pub cache_dir: PathBuf,
    pub replay_mode: ReplayMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subprompt_dir: Option<PathBuf>,
    pub request_timeout_s: u64,
    /// Benchmark sweeps fail when the share of errored items exceeds this.
    pub max_failure_rate: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tau_c: DEFAULT_TAU_C,
            tau_nms: DEFAULT_TAU_NMS,
            tau_t: DEFAULT_TAU_T,
            frame_stride: 1,
            max_targets: DEFAULT_MAX_TARGETS,
            max_clarifications: DEFAULT_MAX_CLARIFICATIONS,
            clarification_pad_s: 1.0,
            repair_retries: 2,
            detect_batch_size: 16,
            video_llm_model: "gemini-1.5-pro".into(),
            llm_model: "gemini-1.5-pro".into(),
            judge_model: "gemini-1.5-pro".into(),
            llm_endpoint: "http://127.0.0.1:8080/v1/complete".into(),
            detector_endpoint: "http://127.0.0.1:8000".into(),
            api_key_env: "VIDQA_API_KEY".into(),
            api_key: None,
            decoder_path: "ffmpeg".into(),
            probe_path: "ffprobe".into(),
            cache_dir: "traces".into(),
            replay_mode: ReplayMode::Live,
            subprompt_dir: None,
            request_timeout_s: 120,
            max_failure_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {}", .violations.join("; "))]
pub struct ConfigValidationError {
    pub violations: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Validation(#[from] ConfigValidationError),
}

impl EngineConfig {
    /// Checks every range constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigValidationError> {
        let mut v = Vec::new();
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.tau_c) {
            v.push(format!("tau_c must be in (0, 1], got {}", self.tau_c));
        }
        if !unit(self.tau_nms) {
            v.push(format!("tau_nms must be in (0, 1], got {}", self.tau_nms));
        }
        if !(self.tau_t.is_finite() && self.tau_t > 0.0) {
            v.push(format!("tau_t must be a positive number of seconds, got {}", self.tau_t));
        }
        if self.frame_stride == 0 {
            v.push("frame_stride must be at least 1".into());
        }
        if self.max_targets == 0 {
            v.push("max_targets must be at least 1".into());
        }
        if self.max_clarifications == 0 {
            v.push("max_clarifications must be at least 1".into());
        }
        if !(self.clarification_pad_s.is_finite() && self.clarification_pad_s >= 0.0) {
            v.push(format!(
                "clarification_pad_s must be non-negative, got {}",
                self.clarification_pad_s
            ));
        }
        if self.detect_batch_size == 0 {
            v.push("detect_batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            v.push(format!("max_failure_rate must be in [0, 1], got {}", self.max_failure_rate));
        }
        for (name, value) in [
            ("video_llm_model", &self.video_llm_model),
            ("llm_model", &self.llm_model),
            ("judge_model", &self.judge_model),
        ] {
            if value.trim().is_empty() {
                v.push(format!("{name} must not be empty"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigValidationError { violations: v })
        }
    }

    /// Renders the effective configuration as TOML (the API key is never printed).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// The config file as written by operators. Every key is optional and
/// unknown keys are rejected. Secrets never live here, only the name of the
/// environment variable that holds them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfigFile {
    pub tau_c: Option<f64>,
    pub tau_nms: Option<f64>,
    pub tau_t: Option<f64>,
    pub frame_stride: Option<u32>,
    pub max_targets: Option<usize>,
    pub max_clarifications: Option<usize>,
    pub clarification_pad_s: Option<f64>,
    pub repair_retries: Option<u32>,
    pub detect_batch_size: Option<usize>,
    pub video_llm_model: Option<String>,
    pub llm_model: Option<String>,
    pub judge_model: Option<String>,
    pub llm_endpoint: Option<String>,
    pub detector_endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub decoder_path: Option<PathBuf>,
    pub probe_path: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub replay_mode: Option<ReplayMode>,
    pub subprompt_dir: Option<PathBuf>,
    pub request_timeout_s: Option<u64>,
    pub max_failure_rate: Option<f64>,
}

macro_rules! overlay {
    ($cfg:ident, $file:ident, $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $file.$field { $cfg.$field = v; } )+
    };
}

impl CliConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn apply(self, cfg: &mut EngineConfig) {
        let file = self;
        overlay!(
            cfg, file, tau_c, tau_nms, tau_t, frame_stride, max_targets, max_clarifications,
            clarification_pad_s, repair_retries, detect_batch_size, video_llm_model, llm_model,
            judge_model, llm_endpoint, detector_endpoint, api_key_env, decoder_path, probe_path,
            cache_dir, replay_mode, request_timeout_s, max_failure_rate,
        );
        if file.subprompt_dir.is_some() {
            cfg.subprompt_dir = file.subprompt_dir;
        }
    }
}

/// Loads the effective configuration.
///
/// `path = None` means defaults only. `env` is passed explicitly so callers
/// (and tests) control which variables are visible.
pub fn load_config(
    path: Option<&Path>,
    env: &HashMap<String, String>,
) -> Result<EngineConfig, ConfigError> {
    let mut cfg = EngineConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        CliConfigFile::parse(&text)
            .map_err(|message| ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            })?
            .apply(&mut cfg);
    }
    if let Some(v) = env.get(ENV_LLM_ENDPOINT) {
        cfg.llm_endpoint = v.clone();
    }
    if let Some(v) = env.get(ENV_DETECTOR_ENDPOINT) {
        cfg.detector_endpoint = v.clone();
    }
    if let Some(v) = env.get(ENV_CACHE_DIR) {
        cfg.cache_dir = v.into();
    }
    cfg.api_key = env.get(&cfg.api_key_env).cloned();
    cfg.validate()?;
    Ok(cfg)
}

/// Snapshot of the process environment for [`load_config`].
pub fn process_env() -> HashMap<String, String> {
    std::env::vars().collect()
}
