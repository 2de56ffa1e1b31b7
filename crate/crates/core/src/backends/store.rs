use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::detect::{DetectionQuery, FrameDetections};
use super::model::ModelRequest;
use super::recorder;
use super::video::VideoMeta;
use super::BackendError;

/// What a transcript records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptBody {
    Model {
        request: ModelRequest,
        raw_text: String,
    },
    Detection {
        sha256: String,
        query: DetectionQuery,
        frames: Vec<FrameDetections>,
    },
    Probe {
        sha256: String,
        meta: VideoMeta,
    },
}

impl TranscriptBody {
    /// The content key this body must be stored under.
    pub fn key(&self) -> String {
        match self {
            TranscriptBody::Model { request, .. } => recorder::model_key(request),
            TranscriptBody::Detection { sha256, query, .. } => {
                recorder::detection_key(sha256, query)
            }
            TranscriptBody::Probe { sha256, .. } => recorder::probe_key(sha256),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TranscriptBody::Model { .. } => "model",
            TranscriptBody::Detection { .. } => "detection",
            TranscriptBody::Probe { .. } => "probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub timestamp: String,
    #[serde(flatten)]
    pub body: TranscriptBody,
}

impl Transcript {
    pub fn new(body: TranscriptBody) -> Self {
        Self {
            key: body.key(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyIssue {
    Unreadable { file: PathBuf, message: String },
    KeyMismatch { file: PathBuf, stored: String, computed: String },
    FileNameMismatch { file: PathBuf, key: String },
}

impl std::fmt::Display for VerifyIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyIssue::Unreadable { file, message } => {
                write!(f, "{}: unreadable: {message}", file.display())
            }
            VerifyIssue::KeyMismatch { file, stored, computed } => {
                write!(f, "{}: stored key {stored} but content hashes to {computed}", file.display())
            }
            VerifyIssue::FileNameMismatch { file, key } => {
                write!(f, "{}: file name does not match key {key}", file.display())
            }
        }
    }
}

/// A directory of transcripts, one JSON file per key, named `<hex key>.json`.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| BackendError::Store(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    /// Opens an existing directory without creating it.
    pub fn open_existing(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(BackendError::Store(format!("{} is not a directory", dir.display())));
        }
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Transcript>, BackendError> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| BackendError::Store(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BackendError::Store(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes a transcript via a temp file and rename. Concurrent writers of
    /// the same key race harmlessly since their payloads are identical.
    pub fn put(&self, transcript: &Transcript) -> Result<(), BackendError> {
        let err = |e: std::io::Error| BackendError::Store(format!("{}: {e}", self.dir.display()));
        let mut json = serde_json::to_string_pretty(transcript)
            .map_err(|e| BackendError::Store(e.to_string()))?;
        json.push('\n');
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(err)?;
        tmp.write_all(json.as_bytes()).map_err(err)?;
        tmp.persist(self.path_for(&transcript.key))
            .map_err(|e| err(e.error))?;
        Ok(())
    }

    /// Every transcript file, sorted by key.
    pub fn list(&self) -> Result<Vec<(PathBuf, Result<Transcript, String>)>, BackendError> {
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| BackendError::Store(format!("{}: {e}", self.dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        Ok(files
            .into_iter()
            .map(|path| {
                let parsed = fs::read(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()));
                (path, parsed)
            })
            .collect())
    }

    /// Recomputes each transcript's key from its content. Responses are not
    /// re-validated: failed attempts that triggered a repair are stored too.
    pub fn verify(&self) -> Result<(usize, Vec<VerifyIssue>), BackendError> {
        let mut issues = Vec::new();
        let entries = self.list()?;
        let total = entries.len();
        for (file, parsed) in entries {
            let t = match parsed {
                Ok(t) => t,
                Err(message) => {
                    issues.push(VerifyIssue::Unreadable { file, message });
                    continue;
                }
            };
            let computed = t.body.key();
            if computed != t.key {
                issues.push(VerifyIssue::KeyMismatch {
                    file: file.clone(),
                    stored: t.key.clone(),
                    computed,
                });
            }
            if file.file_stem().and_then(|s| s.to_str()) != Some(t.key.as_str()) {
                issues.push(VerifyIssue::FileNameMismatch {
                    file: file.clone(),
                    key: t.key.clone(),
                });
            }
        }
        Ok((total, issues))
    }
}
