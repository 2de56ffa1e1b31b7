use serde::Serialize;
use sha2::{Digest, Sha256};

use super::detect::DetectionQuery;
use super::model::ModelRequest;
use super::store::{Transcript, TranscriptBody, TranscriptStore};
use super::BackendError;
use crate::config::{EngineConfig, ReplayMode};
use crate::time::Interval;

fn digest<T: Serialize>(domain: &str, value: &T) -> String {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(value).expect("key material serializes"));
    hex::encode(h.finalize())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct ModelKey<'a> {
    model_id: &'a str,
    prompt: &'a str,
    media_sha256: Option<&'a str>,
    window: Option<Interval>,
    trimmed: bool,
    schema_sha256: Option<String>,
    temperature: f64,
    attempt: u32,
}

/// Content key of a model call. The media path is deliberately absent: only
/// the media bytes (by hash) and the window identify it.
pub(crate) fn model_key(req: &ModelRequest) -> String {
    let key = ModelKey {
        model_id: &req.model_id,
        prompt: &req.prompt,
        media_sha256: req.media.as_ref().map(|m| m.sha256.as_str()),
        window: req.media.as_ref().and_then(|m| m.window),
        trimmed: req.media.as_ref().is_some_and(|m| m.trim),
        schema_sha256: req
            .output_schema
            .as_ref()
            .map(|s| sha256_hex(&serde_json::to_vec(s).expect("schema serializes"))),
        temperature: req.temperature,
        attempt: req.attempt,
    };
    digest("model", &key)
}

pub(crate) fn detection_key(sha256: &str, query: &DetectionQuery) -> String {
    digest("detection", &(sha256, query))
}

pub(crate) fn probe_key(sha256: &str) -> String {
    digest("probe", &sha256)
}

/// Applies the replay mode to any keyed interaction.
#[derive(Debug, Clone)]
pub struct Recorder {
    mode: ReplayMode,
    store: Option<TranscriptStore>,
}

impl Recorder {
    /// Live calls only, no store.
    pub fn live() -> Self {
        Self {
            mode: ReplayMode::Live,
            store: None,
        }
    }

    pub fn record(store: TranscriptStore) -> Self {
        Self {
            mode: ReplayMode::Record,
            store: Some(store),
        }
    }

    pub fn replay(store: TranscriptStore) -> Self {
        Self {
            mode: ReplayMode::Replay,
            store: Some(store),
        }
    }

    pub fn from_config(cfg: &EngineConfig) -> Result<Self, BackendError> {
        Ok(match cfg.replay_mode {
            ReplayMode::Live => Self::live(),
            ReplayMode::Record => Self::record(TranscriptStore::open(&cfg.cache_dir)?),
            ReplayMode::Replay => Self::replay(TranscriptStore::open_existing(&cfg.cache_dir)?),
        })
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    pub fn store(&self) -> Option<&TranscriptStore> {
        self.store.as_ref()
    }

    /// Serves `key` according to the mode. `extract` pulls the value out of a
    /// stored body; `live` performs the real interaction and returns the body
    /// to persist. The flag is true when the value came from the store.
    pub fn through<T>(
        &self,
        key: &str,
        extract: impl Fn(&TranscriptBody) -> Option<T>,
        live: impl FnOnce() -> Result<(T, TranscriptBody), BackendError>,
    ) -> Result<(T, bool), BackendError> {
        let stored = |store: &TranscriptStore| -> Result<Option<T>, BackendError> {
            match store.get(key)? {
                Some(t) => extract(&t.body).map(Some).ok_or_else(|| {
                    BackendError::Store(format!("transcript {key} has kind {}", t.body.kind()))
                }),
                None => Ok(None),
            }
        };
        match (self.mode, &self.store) {
            (ReplayMode::Replay, Some(store)) => stored(store)?
                .map(|v| (v, true))
                .ok_or_else(|| BackendError::ReplayMiss { key: key.to_string() }),
            (ReplayMode::Record, Some(store)) => {
                if let Some(v) = stored(store)? {
                    return Ok((v, true));
                }
                let (value, body) = live()?;
                store.put(&Transcript::new(body))?;
                Ok((value, false))
            }
            (ReplayMode::Replay | ReplayMode::Record, None) => {
                Err(BackendError::Store("no transcript store configured".into()))
            }
            (ReplayMode::Live, _) => live().map(|(v, _)| (v, false)),
        }
    }
}
