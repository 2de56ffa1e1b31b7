use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::recorder::{model_key, Recorder};
use super::schema::{parse_model_json, validate_against};
use super::store::TranscriptBody;
use super::video::{VideoMeta, VideoSource};
use super::BackendError;
use crate::time::Interval;

/// Video attached to a model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub path: PathBuf,
    pub sha256: String,
    /// Portion of the video the model should consider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Interval>,
    /// Cut the file to `window` before sending, so the model cannot see
    /// outside it.
    #[serde(default)]
    pub trim: bool,
}

impl MediaRef {
    /// The whole video, untrimmed.
    pub fn whole(video: &VideoMeta) -> Self {
        Self {
            path: video.path.clone(),
            sha256: video.sha256.clone(),
            window: None,
            trim: false,
        }
    }

    /// Only `window` of the video, physically cut before sending.
    pub fn trimmed(video: &VideoMeta, window: Interval) -> Self {
        Self {
            window: Some(window),
            trim: true,
            ..Self::whole(video)
        }
    }
}

/// A value produced by one logical model call, with the transcripts behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Traced<T> {
    pub value: T,
    pub transcript_id: String,
    pub failed_attempts: Vec<String>,
}

impl<T> Traced<T> {
    pub fn new(value: T, response: &ModelResponse) -> Self {
        Self {
            value,
            transcript_id: response.transcript_id.clone(),
            failed_attempts: response.failed_attempts.clone(),
        }
    }

    /// Every transcript id, failed attempts first.
    pub fn transcript_ids(&self) -> Vec<String> {
        let mut ids = self.failed_attempts.clone();
        ids.push(self.transcript_id.clone());
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub model_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<MediaRef>,
    /// `None` for free-text calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<Value>,
    pub temperature: f64,
    /// Distinguishes retries of an otherwise identical request.
    #[serde(default)]
    pub attempt: u32,
}

impl ModelRequest {
    pub fn structured(model_id: impl Into<String>, prompt: String, schema: Value) -> Self {
        Self {
            model_id: model_id.into(),
            prompt,
            media: None,
            output_schema: Some(schema),
            temperature: 0.0,
            attempt: 0,
        }
    }

    pub fn text(model_id: impl Into<String>, prompt: String) -> Self {
        Self {
            model_id: model_id.into(),
            prompt,
            media: None,
            output_schema: None,
            temperature: 0.0,
            attempt: 0,
        }
    }

    pub fn with_media(mut self, media: MediaRef) -> Self {
        self.media = Some(media);
        self
    }

    pub fn key(&self) -> String {
        model_key(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub raw_text: String,
    /// Schema-valid document, or a JSON string for free-text calls.
    pub parsed: Value,
    pub transcript_id: String,
    pub from_cache: bool,
    /// Transcript ids of the failed attempts that preceded this response.
    pub failed_attempts: Vec<String>,
}

/// Request body of the chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Value>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct WireResponse {
    text: String,
}

/// Something that can answer a chat request with raw text.
pub trait ModelTransport: Send + Sync {
    fn complete(&self, request: &WireRequest) -> Result<String, BackendError>;
}

/// JSON-over-HTTP chat endpoint: `POST <endpoint>` with a [`WireRequest`],
/// answering `{"text": ...}`.
pub struct HttpModelTransport {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpModelTransport {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout_s: u64) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_s))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            api_key,
            client,
        })
    }
}

impl ModelTransport for HttpModelTransport {
    fn complete(&self, request: &WireRequest) -> Result<String, BackendError> {
        let mut builder = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(BackendError::Transport(format!("{status}: {body}")));
        }
        let body: WireResponse = resp
            .json()
            .map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        Ok(body.text)
    }
}

/// Structured-output client: schema gate, repair retries and record/replay.
#[derive(Clone)]
pub struct ModelClient {
    transport: Arc<dyn ModelTransport>,
    recorder: Recorder,
    repair_retries: u32,
    trimmer: Option<Arc<dyn VideoSource>>,
}

const REPAIR_SUFFIX: &str = "\n\nYour previous response did not match the required JSON schema: ";

impl ModelClient {
    pub fn new(transport: Arc<dyn ModelTransport>, recorder: Recorder, repair_retries: u32) -> Self {
        Self {
            transport,
            recorder,
            repair_retries,
            trimmer: None,
        }
    }

    /// Physically cut trimmed media with this source before live calls.
    pub fn with_trimmer(mut self, trimmer: Arc<dyn VideoSource>) -> Self {
        self.trimmer = Some(trimmer);
        self
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    fn send(&self, req: &ModelRequest) -> Result<String, BackendError> {
        let mut media_ref = req.media.as_ref().map(|m| m.path.display().to_string());
        // keeps the trimmed file alive for the duration of the call
        let mut _trimmed = None;
        if let (Some(media), Some(trimmer)) = (&req.media, &self.trimmer) {
            if let (true, Some(window)) = (media.trim, media.window) {
                let cut = trimmer.trim(&media.path, window)?;
                media_ref = Some(cut.display().to_string());
                _trimmed = Some(cut);
            }
        }
        let wire = WireRequest {
            model: req.model_id.clone(),
            prompt: req.prompt.clone(),
            media_ref,
            window: req.media.as_ref().and_then(|m| m.window),
            schema: req.output_schema.clone(),
            temperature: req.temperature,
        };
        self.transport.complete(&wire)
    }

    /// One keyed request through the recorder: (raw text, transcript id, from cache).
    fn fetch(&self, req: &ModelRequest) -> Result<(String, String, bool), BackendError> {
        let key = req.key();
        let (raw, cached) = self.recorder.through(
            &key,
            |body| match body {
                TranscriptBody::Model { raw_text, .. } => Some(raw_text.clone()),
                _ => None,
            },
            || {
                let raw = self.send(req)?;
                Ok((
                    raw.clone(),
                    TranscriptBody::Model {
                        request: req.clone(),
                        raw_text: raw,
                    },
                ))
            },
        )?;
        Ok((raw, key, cached))
    }

    /// Issues a schema-constrained request. Invalid output is re-prompted up
    /// to `repair_retries` times with the validation error appended.
    pub fn complete_structured(&self, req: ModelRequest) -> Result<ModelResponse, BackendError> {
        let schema = req
            .output_schema
            .clone()
            .ok_or_else(|| BackendError::InvalidRequest("structured call without schema".into()))?;
        let base_prompt = req.prompt.clone();
        let mut attempt_req = req;
        let mut failed = Vec::new();
        let mut last_error = String::new();
        for attempt in 0..=self.repair_retries {
            attempt_req.attempt = attempt;
            if attempt > 0 {
                attempt_req.prompt = format!(
                    "{base_prompt}{REPAIR_SUFFIX}{last_error}\nRespond again with a single JSON object only."
                );
            }
            let (raw, id, cached) = self.fetch(&attempt_req)?;
            let checked = parse_model_json(&raw)
                .and_then(|value| validate_against(&schema, &value).map(|_| value));
            match checked {
                Ok(parsed) => {
                    return Ok(ModelResponse {
                        raw_text: raw,
                        parsed,
                        transcript_id: id,
                        from_cache: cached,
                        failed_attempts: failed,
                    })
                }
                Err(e) => {
                    log::warn!("{}: attempt {attempt} rejected: {e}", attempt_req.model_id);
                    failed.push(id);
                    last_error = e;
                }
            }
        }
        Err(BackendError::SchemaViolationAfterRetries {
            model_id: attempt_req.model_id,
            attempts: self.repair_retries + 1,
            last_error,
        })
    }

    /// Issues a free-text request; the caller interprets the text.
    pub fn complete_text(&self, req: ModelRequest) -> Result<ModelResponse, BackendError> {
        if req.output_schema.is_some() {
            return Err(BackendError::InvalidRequest("free-text call with schema".into()));
        }
        let (raw, id, cached) = self.fetch(&req)?;
        Ok(ModelResponse {
            parsed: Value::String(raw.clone()),
            raw_text: raw,
            transcript_id: id,
            from_cache: cached,
            failed_attempts: Vec::new(),
        })
    }
}
