//! End-to-end run for one question: first-sight fan-out, object grounding,
//! then judgment with optional clarification and refinement.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{self, AnalyzerError, CaptionedSegment, Rationale, TargetList};
use crate::backends::{BackendError, Backends, Traced, VideoMeta};
use crate::bench::match_option;
use crate::config::EngineConfig;
use crate::grounding::{self, GroundedObjects, GroundingError};
use crate::judge::{self, ClarificationQuestion, JudgeError, JudgmentVerdict, QAPair};
use crate::question::{FinalAnswer, Provenance, QuestionError, QuestionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ValidateQuestion,
    DecodeFrames,
    FirstSight,
    CaptionSegments,
    FindTargets,
    GroundObjects,
    CompareGrounding,
    GenerateQuestions,
    AnswerClarification,
    RefineAnswer,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ValidateQuestion => "validate_question",
            Stage::DecodeFrames => "decode_frames",
            Stage::FirstSight => "first_sight",
            Stage::CaptionSegments => "caption_segments",
            Stage::FindTargets => "find_targets",
            Stage::GroundObjects => "ground_objects",
            Stage::CompareGrounding => "compare_grounding",
            Stage::GenerateQuestions => "generate_questions",
            Stage::AnswerClarification => "answer_clarification",
            Stage::RefineAnswer => "refine_answer",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Conditions worth surfacing in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// Captioning failed; judgment ran on object grounding alone.
    CaptionsUnavailable,
    /// Grounding could not run; the answer is the unverified first-sight one.
    Ungrounded,
    /// The judge disagreed but produced no usable clarification question.
    JudgedUnconfidentUnresolved,
    /// Judgment failed after grounding; the answer is the first-sight one.
    JudgmentFailed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warnings {
    pub caption_entries_dropped: usize,
    pub foreign_detections_discarded: usize,
    pub schema_repairs: usize,
}

impl Warnings {
    pub fn add(&mut self, other: &Warnings) {
        self.caption_entries_dropped += other.caption_entries_dropped;
        self.foreign_detections_discarded += other.foreign_detections_discarded;
        self.schema_repairs += other.schema_repairs;
    }
}

/// One logical model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub transcript_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_attempts: Vec<String>,
}

/// Everything one run produced, in a stable JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question: QuestionSpec,
    pub video_sha256: String,
    pub rationale: Option<Rationale>,
    pub captions: Vec<CaptionedSegment>,
    pub targets: Option<TargetList>,
    pub grounded: GroundedObjects,
    pub verdict: Option<JudgmentVerdict>,
    pub questions: Vec<ClarificationQuestion>,
    pub qa: Vec<QAPair>,
    #[serde(rename = "final")]
    pub final_answer: Option<FinalAnswer>,
    pub flags: Vec<Flag>,
    pub warnings: Warnings,
    pub calls: Vec<CallRecord>,
    /// Milliseconds per stage; the only field that varies between replays.
    pub timings: BTreeMap<Stage, f64>,
}

impl RunRecord {
    fn new(question: &QuestionSpec, video_sha256: &str) -> Self {
        Self {
            question: question.clone(),
            video_sha256: video_sha256.to_string(),
            rationale: None,
            captions: Vec::new(),
            targets: None,
            grounded: GroundedObjects::empty(),
            verdict: None,
            questions: Vec::new(),
            qa: Vec::new(),
            final_answer: None,
            flags: Vec::new(),
            warnings: Warnings::default(),
            calls: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    /// Number of logical model calls (repair retries not counted separately).
    pub fn model_calls(&self) -> usize {
        self.calls.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes")
    }

    /// JSON with timings cleared, for byte comparison between runs.
    pub fn stable_json(&self) -> String {
        let mut copy = self.clone();
        copy.timings.clear();
        copy.to_json()
    }

    fn log_call<T>(&mut self, stage: Stage, traced: &Traced<T>) {
        self.warnings.schema_repairs += traced.failed_attempts.len();
        self.calls.push(CallRecord {
            stage,
            transcript_id: traced.transcript_id.clone(),
            failed_attempts: traced.failed_attempts.clone(),
        });
    }

    fn all_transcript_ids(&self) -> Vec<String> {
        self.calls
            .iter()
            .flat_map(|c| c.failed_attempts.iter().chain([&c.transcript_id]).cloned())
            .collect()
    }

    /// The first-sight answer as a final answer.
    fn first_sight_final(&self) -> Option<FinalAnswer> {
        let r = self.rationale.as_ref()?;
        Some(FinalAnswer {
            answer: r.answer.clone(),
            reasoning: r.reasoning.clone(),
            chosen_option_index: self
                .question
                .options
                .as_deref()
                .and_then(|opts| match_option(&r.answer, opts).ok()),
            provenance: Provenance::FirstSight,
            transcript_ids: self.all_transcript_ids(),
        })
    }

    fn time(&mut self, stage: Stage, started: Instant) {
        self.timings.insert(stage, started.elapsed().as_secs_f64() * 1000.0);
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

/// A run that stopped at `stage`. When the first-sight answer exists the
/// partial record carries it as a flagged fallback in `final`.
#[derive(Debug, Error)]
#[error("stage {stage} failed: {error}")]
pub struct StageFailure {
    pub stage: Stage,
    pub error: PipelineError,
    pub partial: Box<RunRecord>,
}

fn fail(stage: Stage, error: impl Into<PipelineError>, mut record: RunRecord, flag: Option<Flag>) -> StageFailure {
    if let Some(flag) = flag {
        record.flags.push(flag);
    }
    record.final_answer = record.first_sight_final();
    StageFailure {
        stage,
        error: error.into(),
        partial: Box::new(record),
    }
}

/// Opens the video (hash and probe) and runs the question against it.
pub fn run_question_at(
    backends: &Backends,
    cfg: &EngineConfig,
    video_path: &Path,
    question: &QuestionSpec,
) -> Result<RunRecord, StageFailure> {
    let started = Instant::now();
    let opened = backends.open_video(video_path);
    let probe_ms = started.elapsed().as_secs_f64() * 1000.0;
    let video = opened.map_err(|e| {
        let mut record = RunRecord::new(question, "");
        record.timings.insert(Stage::DecodeFrames, probe_ms);
        fail(Stage::DecodeFrames, e, record, None)
    })?;
    let mut result = run_question(backends, cfg, &video, question);
    match &mut result {
        Ok(r) => r.timings.insert(Stage::DecodeFrames, probe_ms),
        Err(f) => f.partial.timings.insert(Stage::DecodeFrames, probe_ms),
    };
    result
}

pub fn run_question(
    backends: &Backends,
    cfg: &EngineConfig,
    video: &VideoMeta,
    question: &QuestionSpec,
) -> Result<RunRecord, StageFailure> {
    let mut record = RunRecord::new(question, &video.sha256);
    if let Err(e) = question.validate() {
        return Err(fail(Stage::ValidateQuestion, e, record, None));
    }
    let models = &backends.models;

    // first sight: three independent calls
    let (rationale, captions, targets) = thread::scope(|s| {
        let a = s.spawn(|| {
            let t = Instant::now();
            (analyzer::first_sight(models, cfg, video, question), t.elapsed())
        });
        let c = s.spawn(|| {
            let t = Instant::now();
            (analyzer::caption_segments(models, cfg, video), t.elapsed())
        });
        let g = s.spawn(|| {
            let t = Instant::now();
            (analyzer::find_targets(models, cfg, video, question), t.elapsed())
        });
        (
            a.join().expect("first-sight thread"),
            c.join().expect("caption thread"),
            g.join().expect("target thread"),
        )
    });
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1000.0;
    record.timings.insert(Stage::FirstSight, ms(rationale.1));
    record.timings.insert(Stage::CaptionSegments, ms(captions.1));
    record.timings.insert(Stage::FindTargets, ms(targets.1));

    // calls are logged in a fixed order regardless of completion order
    let rationale = match rationale.0 {
        Ok(r) => {
            record.log_call(Stage::FirstSight, &r);
            r.value
        }
        Err(e) => return Err(fail(Stage::FirstSight, e, record, None)),
    };
    record.rationale = Some(rationale.clone());
    match captions.0 {
        Ok(c) => {
            record.log_call(Stage::CaptionSegments, &c);
            record.warnings.caption_entries_dropped = c.value.dropped;
            record.captions = c.value.segments;
        }
        Err(e) => {
            log::warn!("captioning failed, continuing without captions: {e}");
            record.flags.push(Flag::CaptionsUnavailable);
        }
    }
    let targets = match targets.0 {
        Ok(t) => {
            record.log_call(Stage::FindTargets, &t);
            t.value
        }
        Err(e) => return Err(fail(Stage::FindTargets, e, record, Some(Flag::Ungrounded))),
    };
    record.targets = Some(targets.clone());

    let t = Instant::now();
    let grounded = grounding::ground_objects(backends, video, &targets.targets, cfg);
    record.time(Stage::GroundObjects, t);
    match grounded {
        Ok((objects, foreign)) => {
            record.grounded = objects;
            record.warnings.foreign_detections_discarded = foreign;
        }
        Err(e) => return Err(fail(Stage::GroundObjects, e, record, Some(Flag::Ungrounded))),
    }

    let t = Instant::now();
    let verdict = judge::compare_grounding(models, cfg, &rationale, &record.captions, &record.grounded);
    record.time(Stage::CompareGrounding, t);
    let verdict = match verdict {
        Ok(v) => {
            record.log_call(Stage::CompareGrounding, &v);
            v.value
        }
        Err(e) => return Err(fail(Stage::CompareGrounding, e, record, Some(Flag::JudgmentFailed))),
    };
    record.verdict = Some(verdict.clone());
    if !verdict.disagree {
        record.final_answer = record.first_sight_final();
        return Ok(record);
    }

    let t = Instant::now();
    let questions = judge::generate_questions(models, cfg, video, &verdict, question);
    record.time(Stage::GenerateQuestions, t);
    let questions = match questions {
        Ok(q) => {
            record.log_call(Stage::GenerateQuestions, &q);
            q.value
        }
        Err(e) => return Err(fail(Stage::GenerateQuestions, e, record, Some(Flag::JudgmentFailed))),
    };
    record.questions = questions.clone();
    if questions.is_empty() {
        record.flags.push(Flag::JudgedUnconfidentUnresolved);
        record.final_answer = record.first_sight_final();
        return Ok(record);
    }

    let t = Instant::now();
    let answers: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = questions
            .iter()
            .map(|q| s.spawn(move || judge::answer_clarification(models, cfg, video, q)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("clarification thread"))
            .collect()
    });
    record.time(Stage::AnswerClarification, t);
    for answer in answers {
        match answer {
            Ok(pair) => {
                record.log_call(Stage::AnswerClarification, &pair);
                record.qa.push(pair.value);
            }
            Err(e) => {
                return Err(fail(Stage::AnswerClarification, e, record, Some(Flag::JudgmentFailed)))
            }
        }
    }

    let t = Instant::now();
    let refined = judge::refine_answer(
        models,
        cfg,
        &rationale,
        question,
        &record.captions,
        &record.grounded,
        &record.qa,
    );
    record.time(Stage::RefineAnswer, t);
    match refined {
        Ok(r) => {
            record.log_call(Stage::RefineAnswer, &r);
            let mut final_answer = r.value;
            final_answer.transcript_ids = record.all_transcript_ids();
            record.final_answer = Some(final_answer);
            Ok(record)
        }
        Err(e) => Err(fail(Stage::RefineAnswer, e, record, Some(Flag::JudgmentFailed))),
    }
}
