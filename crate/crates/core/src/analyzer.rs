//! First-sight assessment: the three independent VideoLLM calls made before
//! any grounding (preliminary answer, scene captions, detection targets).

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backends::{BackendError, MediaRef, ModelClient, ModelRequest, Traced, VideoMeta};
use crate::config::EngineConfig;
use crate::prompts::{self, subinstruction};
use crate::question::QuestionSpec;
use crate::time::{parse_timeframe_token, Interval};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("model returned an empty {0:?} field")]
    EmptyField(&'static str),
    #[error("none of the {count} returned timeframes could be parsed")]
    AllSegmentsUnparsable { count: usize },
    #[error("model returned no detection targets")]
    EmptyTargetList,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Preliminary answer and the reasoning behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub answer: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedSegment {
    pub interval: Interval,
    pub caption: String,
}

/// Captions plus the number of entries that had to be dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Captions {
    pub segments: Vec<CaptionedSegment>,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetList {
    pub targets: Vec<String>,
}

fn text_field(parsed: &Value, name: &'static str) -> Result<String, AnalyzerError> {
    let text = parsed[name].as_str().unwrap_or_default().trim();
    if text.is_empty() {
        return Err(AnalyzerError::EmptyField(name));
    }
    Ok(text.to_string())
}

fn string_list(parsed: &Value, name: &str) -> Vec<String> {
    parsed[name]
        .as_array()
        .map(|items| items.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

fn request(model_id: &str, prompt: String, schema: Value, video: &VideoMeta) -> ModelRequest {
    ModelRequest::structured(model_id, prompt, schema).with_media(MediaRef::whole(video))
}

pub fn first_sight_prompt(question: &QuestionSpec, cfg: &EngineConfig) -> String {
    let sub = subinstruction(cfg.subprompt_dir.as_deref(), question);
    prompts::VLLM_ANALYZER.compose(Some(&sub), &question.sections())
}

/// Scene captioning deliberately sees only the video, never the question.
pub fn caption_prompt() -> String {
    prompts::VLLM_CAPTIONER.compose(None, &[])
}

pub fn target_prompt(question: &QuestionSpec) -> String {
    prompts::VLLM_TARGET_FINDER.compose(None, &question.sections())
}

pub fn first_sight(
    models: &ModelClient,
    cfg: &EngineConfig,
    video: &VideoMeta,
    question: &QuestionSpec,
) -> Result<Traced<Rationale>, AnalyzerError> {
    let req = request(
        &cfg.video_llm_model,
        first_sight_prompt(question, cfg),
        prompts::analyzer_schema(),
        video,
    );
    let resp = models.complete_structured(req)?;
    let rationale = Rationale {
        answer: text_field(&resp.parsed, "answer")?,
        reasoning: text_field(&resp.parsed, "reasoning")?,
    };
    Ok(Traced::new(rationale, &resp))
}

/// Parses captioner output. Entries without a timeframe token or without a
/// caption are dropped and counted; segments come back ordered by start,
/// then end, then the order received.
pub fn parse_captions(entries: &[String]) -> Result<Captions, AnalyzerError> {
    let mut segments: Vec<CaptionedSegment> = entries
        .iter()
        .filter_map(|entry| {
            let parsed = parse_timeframe_token(entry).ok()?;
            let caption = parsed.caption.filter(|c| !c.is_empty())?;
            Some(CaptionedSegment {
                interval: parsed.interval,
                caption,
            })
        })
        .collect();
    let dropped = entries.len() - segments.len();
    if !entries.is_empty() && segments.is_empty() {
        return Err(AnalyzerError::AllSegmentsUnparsable { count: dropped });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} unparsable caption entries");
    }
    segments.sort_by(|a, b| {
        a.interval
            .start_s()
            .total_cmp(&b.interval.start_s())
            .then(a.interval.end_s().total_cmp(&b.interval.end_s()))
    });
    Ok(Captions { segments, dropped })
}

pub fn caption_segments(
    models: &ModelClient,
    cfg: &EngineConfig,
    video: &VideoMeta,
) -> Result<Traced<Captions>, AnalyzerError> {
    let req = request(&cfg.video_llm_model, caption_prompt(), prompts::captioner_schema(), video);
    let resp = models.complete_structured(req)?;
    let captions = parse_captions(&string_list(&resp.parsed, "timeframes"))?;
    Ok(Traced::new(captions, &resp))
}

/// Trims, drops blanks, removes case-insensitive duplicates (first spelling
/// wins) and keeps at most `max` targets.
pub fn normalize_targets(raw: &[String], max: usize) -> Result<TargetList, AnalyzerError> {
    let mut seen = Vec::new();
    let mut targets = Vec::new();
    for t in raw.iter().map(|t| t.trim()).filter(|t| !t.is_empty()) {
        let folded = t.to_lowercase();
        if !seen.contains(&folded) {
            seen.push(folded);
            targets.push(t.to_string());
        }
    }
    if targets.is_empty() {
        return Err(AnalyzerError::EmptyTargetList);
    }
    targets.truncate(max);
    Ok(TargetList { targets })
}

pub fn find_targets(
    models: &ModelClient,
    cfg: &EngineConfig,
    video: &VideoMeta,
    question: &QuestionSpec,
) -> Result<Traced<TargetList>, AnalyzerError> {
    let req = request(
        &cfg.video_llm_model,
        target_prompt(question),
        prompts::target_finder_schema(),
        video,
    );
    let resp = models.complete_structured(req)?;
    let targets = normalize_targets(&string_list(&resp.parsed, "targets"), cfg.max_targets)?;
    Ok(Traced::new(targets, &resp))
}
