//! Chain-of-thought judgment: checks the first-sight reasoning against the
//! grounding, asks timeframed clarification questions when they disagree and
//! produces the refined answer.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analyzer::{CaptionedSegment, Rationale};
use crate::backends::{BackendError, MediaRef, ModelClient, ModelRequest, Traced, VideoMeta};
use crate::bench::match_option;
use crate::config::EngineConfig;
use crate::grounding::GroundedObjects;
use crate::prompts::{self, subinstruction};
use crate::question::{FinalAnswer, Provenance, QuestionSpec};
use crate::time::{format_timeframe, scan_timeframes, union_window, Interval};

/// Padding around doubtful intervals when a question carries no timeframe.
pub const FALLBACK_PAD_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("model returned an empty {0:?} field")]
    EmptyField(&'static str),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentVerdict {
    pub disagree: bool,
    pub reasoning: String,
    /// Timeframes mentioned in the reasoning, in order of appearance.
    pub doubtful_intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationQuestion {
    pub text: String,
    pub interval: Interval,
    /// True when the question had no timeframe and the interval was derived
    /// from the verdict's doubtful intervals.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inferred_interval: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: ClarificationQuestion,
    pub answer: String,
    /// The part of the video the answering model was shown.
    pub window: Interval,
}

fn text_field(parsed: &Value, name: &'static str) -> Result<String, JudgeError> {
    let text = parsed[name].as_str().unwrap_or_default().trim();
    if text.is_empty() {
        return Err(JudgeError::EmptyField(name));
    }
    Ok(text.to_string())
}

/// One `<<mm:ss,mm:ss>>: caption` line per segment.
pub fn render_captions(captions: &[CaptionedSegment]) -> String {
    if captions.is_empty() {
        return "(none)".into();
    }
    captions
        .iter()
        .map(|c| format!("{}: {}", format_timeframe(&c.interval), c.caption))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_objects(objects: &GroundedObjects) -> String {
    let rendered = objects.timeline.render();
    if rendered.trim().is_empty() {
        "(none)".into()
    } else {
        rendered
    }
}

pub fn comparator_prompt(
    rationale: &Rationale,
    captions: &[CaptionedSegment],
    objects: &GroundedObjects,
) -> String {
    prompts::LLM_COMPARATOR.compose(
        None,
        &[
            ("Answer", rationale.answer.clone()),
            ("Reasoning", rationale.reasoning.clone()),
            ("VideoLLM-extracted grounding captions", render_captions(captions)),
            ("YOLO object grounding", render_objects(objects)),
        ],
    )
}

pub fn compare_grounding(
    models: &ModelClient,
    cfg: &EngineConfig,
    rationale: &Rationale,
    captions: &[CaptionedSegment],
    objects: &GroundedObjects,
) -> Result<Traced<JudgmentVerdict>, JudgeError> {
    let req = ModelRequest::structured(
        &cfg.llm_model,
        comparator_prompt(rationale, captions, objects),
        prompts::comparator_schema(),
    );
    let resp = models.complete_structured(req)?;
    let reasoning = resp.parsed["reasoning"].as_str().unwrap_or_default().trim().to_string();
    let verdict = JudgmentVerdict {
        disagree: resp.parsed["disagree"].as_bool().unwrap_or(false),
        doubtful_intervals: scan_timeframes(&reasoning).into_iter().map(|t| t.interval).collect(),
        reasoning,
    };
    Ok(Traced::new(verdict, &resp))
}

pub fn question_prompt(verdict: &JudgmentVerdict, question: &QuestionSpec) -> String {
    let mut sections = question.sections();
    sections.push(("Discrepancies", verdict.reasoning.clone()));
    prompts::LLM_QUESTION_GENERATOR.compose(None, &sections)
}

/// Turns generated question strings into clarification questions.
///
/// A question's interval is its first timeframe token. Without a token, it
/// falls back to the union of the doubtful intervals (padded), and is dropped
/// when there are none. Intervals are clamped to the video and at most `max`
/// questions are kept.
pub fn parse_questions(
    raw: &[String],
    doubtful: &[Interval],
    duration_s: f64,
    max: usize,
) -> Vec<ClarificationQuestion> {
    let fallback = union_window(doubtful, FALLBACK_PAD_S).ok();
    raw.iter()
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .filter_map(|text| {
            let (interval, inferred) = match scan_timeframes(text).first() {
                Some(tf) => (tf.interval, false),
                None => (fallback?, true),
            };
            Some(ClarificationQuestion {
                text: text.to_string(),
                interval: interval.clamp_to(duration_s),
                inferred_interval: inferred,
            })
        })
        .take(max)
        .collect()
}

pub fn generate_questions(
    models: &ModelClient,
    cfg: &EngineConfig,
    video: &VideoMeta,
    verdict: &JudgmentVerdict,
    question: &QuestionSpec,
) -> Result<Traced<Vec<ClarificationQuestion>>, JudgeError> {
    let req = ModelRequest::structured(
        &cfg.llm_model,
        question_prompt(verdict, question),
        prompts::question_generator_schema(),
    );
    let resp = models.complete_structured(req)?;
    let raw: Vec<String> = resp.parsed["questions"]
        .as_array()
        .map(|qs| qs.iter().filter_map(|q| q.as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    let questions = parse_questions(
        &raw,
        &verdict.doubtful_intervals,
        video.duration_s,
        cfg.max_clarifications,
    );
    if questions.len() < raw.len() {
        log::info!("kept {} of {} clarification questions", questions.len(), raw.len());
    }
    Ok(Traced::new(questions, &resp))
}

/// The window shown for a clarification: the question's interval padded by
/// `pad_s` and clamped to the video.
pub fn clarification_window(q: &ClarificationQuestion, pad_s: f64, duration_s: f64) -> Interval {
    q.interval.padded(pad_s).clamp_to(duration_s)
}

pub fn qa_prompt(q: &ClarificationQuestion) -> String {
    prompts::VLLM_QA.compose(None, &[("Question", q.text.clone())])
}

pub fn answer_clarification(
    models: &ModelClient,
    cfg: &EngineConfig,
    video: &VideoMeta,
    q: &ClarificationQuestion,
) -> Result<Traced<QAPair>, JudgeError> {
    let window = clarification_window(q, cfg.clarification_pad_s, video.duration_s);
    let req = ModelRequest::structured(&cfg.video_llm_model, qa_prompt(q), prompts::qa_schema())
        .with_media(MediaRef::trimmed(video, window));
    let resp = models.complete_structured(req)?;
    let pair = QAPair {
        question: q.clone(),
        answer: text_field(&resp.parsed, "answer")?,
        window,
    };
    Ok(Traced::new(pair, &resp))
}

fn render_qa(qa: &[QAPair]) -> String {
    qa.iter()
        .map(|p| format!("Q: {}\nA: {}", p.question.text, p.answer))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn refine_prompt(
    cfg: &EngineConfig,
    rationale: &Rationale,
    question: &QuestionSpec,
    captions: &[CaptionedSegment],
    objects: &GroundedObjects,
    qa: &[QAPair],
) -> String {
    let sub = subinstruction(cfg.subprompt_dir.as_deref(), question);
    let mut sections = question.sections();
    sections.extend([
        ("Initial answer", rationale.answer.clone()),
        ("Initial reasoning", rationale.reasoning.clone()),
        ("VideoLLM grounding", render_captions(captions)),
        ("YOLO object grounding", render_objects(objects)),
        ("Clarifications", render_qa(qa)),
    ]);
    prompts::LLM_FINAL_REASONER.compose(Some(&sub), &sections)
}

/// Produces the refined answer. Its `transcript_ids` hold only this call;
/// the pipeline adds the rest of the judgment calls.
pub fn refine_answer(
    models: &ModelClient,
    cfg: &EngineConfig,
    rationale: &Rationale,
    question: &QuestionSpec,
    captions: &[CaptionedSegment],
    objects: &GroundedObjects,
    qa: &[QAPair],
) -> Result<Traced<FinalAnswer>, JudgeError> {
    let req = ModelRequest::structured(
        &cfg.llm_model,
        refine_prompt(cfg, rationale, question, captions, objects, qa),
        prompts::final_reasoner_schema(),
    );
    let resp = models.complete_structured(req)?;
    let answer = text_field(&resp.parsed, "answer")?;
    let traced = Traced::new((), &resp);
    let final_answer = FinalAnswer {
        chosen_option_index: question
            .options
            .as_deref()
            .and_then(|opts| match_option(&answer, opts).ok()),
        answer,
        reasoning: resp.parsed["reasoning"].as_str().unwrap_or_default().trim().to_string(),
        provenance: Provenance::Refined,
        transcript_ids: traced.transcript_ids(),
    };
    Ok(Traced::new(final_answer, &resp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::ScriptedModel;
    use crate::backends::Recorder;

    fn video() -> VideoMeta {
        VideoMeta {
            path: "clip.mp4".into(),
            fps: 1.0,
            frame_count: 20,
            duration_s: 20.0,
            width: 8,
            height: 8,
            sha256: "00".into(),
        }
    }

    fn client(responses: &[&str]) -> (ModelClient, std::sync::Arc<ScriptedModel>) {
        let mock = ScriptedModel::queue(responses.iter().copied());
        (ModelClient::new(mock.clone(), Recorder::live(), 2), mock)
    }

    fn rationale() -> Rationale {
        Rationale { answer: "2".into(), reasoning: "the man leaves at the end".into() }
    }

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn agreement_has_no_doubtful_intervals() {
        let (models, _) = client(&[r#"{"disagree":false,"reasoning":"no disagreement"}"#]);
        let v = compare_grounding(&models, &EngineConfig::default(), &rationale(), &[], &GroundedObjects::empty()).unwrap();
        assert!(!v.value.disagree);
        assert!(v.value.doubtful_intervals.is_empty());
    }

    #[test]
    fn disagreement_intervals_are_scanned_from_reasoning() {
        let (models, mock) = client(&[r#"{"disagree":true,"reasoning":"the man at <<00:10,00:15>> conflicts"}"#]);
        let captions = vec![CaptionedSegment { interval: iv(0.0, 7.0), caption: "a man mixes batter".into() }];
        let v = compare_grounding(&models, &EngineConfig::default(), &rationale(), &captions, &GroundedObjects::empty()).unwrap();
        assert_eq!(v.value.doubtful_intervals, vec![iv(10.0, 15.0)]);
        let prompt = &mock.prompts()[0];
        assert!(prompt.starts_with(prompts::LLM_COMPARATOR.text));
        assert!(prompt.contains("\n<<00:00,00:07>>: a man mixes batter\n"));
    }

    #[test]
    fn disagreement_without_tokens_is_kept() {
        let (models, _) = client(&[r#"{"disagree":true,"reasoning":"something is off"}"#]);
        let v = compare_grounding(&models, &EngineConfig::default(), &rationale(), &[], &GroundedObjects::empty()).unwrap();
        assert!(v.value.disagree);
        assert!(v.value.doubtful_intervals.is_empty());
    }

    #[test]
    fn question_parsing_rules() {
        let raw: Vec<String> = vec![
            "What is in his hand <<00:03,00:06>>?".into(),
            "Does he sit <<00:08,00:09>>?".into(),
            "no timeframe here".into(),
            "Who enters <<00:01,00:30>>?".into(),
            "Who leaves <<00:11,00:12>>?".into(),
        ];
        let qs = parse_questions(&raw, &[], 20.0, 3);
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[0].interval, iv(3.0, 6.0));
        // clamped to the video
        assert_eq!(qs[2].interval, iv(1.0, 20.0));

        let with_fallback = parse_questions(&raw[2..3], &[iv(5.0, 6.0), iv(9.0, 10.0)], 20.0, 3);
        assert_eq!(with_fallback[0].interval, iv(4.0, 11.0));
        assert!(with_fallback[0].inferred_interval);
        assert!(parse_questions(&[], &[], 20.0, 3).is_empty());
    }

    #[test]
    fn generate_keeps_at_most_budget() {
        let five = r#"{"questions":["a <<00:01,00:02>>","b <<00:01,00:02>>","c <<00:01,00:02>>","d <<00:01,00:02>>","e <<00:01,00:02>>"]}"#;
        let (models, _) = client(&[five, r#"{"questions":[]}"#]);
        let verdict = JudgmentVerdict { disagree: true, reasoning: "r".into(), doubtful_intervals: vec![] };
        let q = QuestionSpec::open("why?");
        let cfg = EngineConfig::default();
        assert_eq!(generate_questions(&models, &cfg, &video(), &verdict, &q).unwrap().value.len(), 3);
        assert!(generate_questions(&models, &cfg, &video(), &verdict, &q).unwrap().value.is_empty());
    }

    #[test]
    fn clarification_uses_trimmed_padded_window() {
        let (models, mock) = client(&[r#"{"answer":"red"}"#, r#"{"answer":"unanswerable"}"#]);
        let q = ClarificationQuestion { text: "What color is the car? <<00:03,00:06>>".into(), interval: iv(3.0, 6.0), inferred_interval: false };
        let cfg = EngineConfig::default();
        let pair = answer_clarification(&models, &cfg, &video(), &q).unwrap().value;
        assert_eq!(pair.answer, "red");
        assert_eq!(pair.window, iv(2.0, 7.0));
        let wire = &mock.requests()[0];
        assert_eq!(wire.window, Some(iv(2.0, 7.0)));

        let late = ClarificationQuestion { interval: iv(18.0, 25.0), ..q };
        let pair = answer_clarification(&models, &cfg, &video(), &late).unwrap().value;
        assert_eq!(pair.answer, "unanswerable");
        assert_eq!(pair.window, iv(17.0, 20.0));
    }

    #[test]
    fn refine_produces_refined_answer() {
        let (models, mock) = client(&[r#"{"reasoning":"he sits","answer":"3"}"#]);
        let q = QuestionSpec::with_options("what next?", ["a", "b", "c", "d", "e"]);
        let qa = vec![QAPair {
            question: ClarificationQuestion { text: "sits? <<00:01,00:02>>".into(), interval: iv(1.0, 2.0), inferred_interval: false },
            answer: "yes".into(),
            window: iv(0.0, 3.0),
        }];
        let got = refine_answer(&models, &EngineConfig::default(), &rationale(), &q, &[], &GroundedObjects::empty(), &qa).unwrap();
        assert_eq!(got.value.answer, "3");
        assert_eq!(got.value.chosen_option_index, Some(3));
        assert_eq!(got.value.provenance, Provenance::Refined);
        let prompt = &mock.prompts()[0];
        assert!(prompt.starts_with(prompts::LLM_FINAL_REASONER.text));
        assert!(prompt.contains("Q: sits? <<00:01,00:02>>\nA: yes"));
    }

    #[test]
    fn refine_without_answer_is_a_schema_violation() {
        let bad = r#"{"reasoning":"r"}"#;
        let (models, _) = client(&[bad, bad, bad]);
        let err = refine_answer(&models, &EngineConfig::default(), &rationale(), &QuestionSpec::open("q"), &[], &GroundedObjects::empty(), &[])
            .unwrap_err();
        assert!(matches!(err, JudgeError::Backend(BackendError::SchemaViolationAfterRetries { .. })));
    }
}
