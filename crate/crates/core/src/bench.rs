//! Benchmark harness: manifest loading, answer scoring and accuracy reports.
//!
//! A manifest is JSON lines, one item per line:
//!
//! ```text
//! {"id": "q1", "video": "clips/1.mp4", "question": "...", "options": ["..", ".."], "answer": 2, "type_tag": "C"}
//! {"id": "q2", "video": "clips/2.mp4", "question": "...", "answers": ["dog", "a dog"]}
//! {"id": "q3", "video": "clips/3.mp4", "question": "...", "answer": "cooking"}
//! ```
//!
//! `mcq` items carry `options` and an integer `answer` (0-based option
//! index); `open_set` items carry `answers`; `open_single` items carry a
//! string `answer`. `type_tag` and `dataset` are optional. Relative video
//! paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::backends::{BackendError, Backends, ModelRequest};
use crate::config::EngineConfig;
use crate::pipeline::{run_question_at, Flag, Warnings};
use crate::prompts::render_open_answer_judge;
use crate::question::{FinalAnswer, Provenance, QuestionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ManifestFormat {
    Mcq,
    OpenSet,
    OpenSingle,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read manifest {path}: {message}")]
    ManifestIo { path: PathBuf, message: String },
    #[error("manifest line {line}: field {field:?}: {message}")]
    ManifestParse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("judge answered {0:?} twice instead of yes/no")]
    JudgeProtocolViolation(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("cannot write report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    OptionIndex(usize),
    AnswerSet(Vec<String>),
    Answer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub item_id: String,
    pub video: PathBuf,
    pub question: QuestionSpec,
    pub ground_truth: GroundTruth,
}

fn parse_error(line: usize, field: &str, message: impl Into<String>) -> BenchError {
    BenchError::ManifestParse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn required_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<String, BenchError> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(parse_error(line, field, "must not be empty")),
        Some(_) => Err(parse_error(line, field, "must be a string")),
        None => Err(parse_error(line, field, "missing")),
    }
}

fn optional_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<Option<String>, BenchError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(parse_error(line, field, "must be a string")),
    }
}

fn string_list(obj: &Map<String, Value>, line: usize, field: &str) -> Result<Vec<String>, BenchError> {
    let items = obj
        .get(field)
        .ok_or_else(|| parse_error(line, field, "missing"))?
        .as_array()
        .ok_or_else(|| parse_error(line, field, "must be a list of strings"))?;
    let list: Vec<String> = items
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect::<Option<_>>()
        .ok_or_else(|| parse_error(line, field, "must be a list of strings"))?;
    if list.is_empty() {
        return Err(parse_error(line, field, "must not be empty"));
    }
    Ok(list)
}

const KNOWN_FIELDS: [&str; 8] = ["id", "video", "question", "options", "answers", "answer", "type_tag", "dataset"];

fn parse_line(text: &str, line: usize, format: ManifestFormat, base: &Path) -> Result<DatasetItem, BenchError> {
    let value: Value = serde_json::from_str(text).map_err(|e| parse_error(line, "", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_error(line, "", "line is not a JSON object"))?;
    if let Some(unknown) = obj.keys().find(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
        return Err(parse_error(line, unknown, "unknown field"));
    }
    let item_id = match obj.get("id") {
        Some(Value::Number(n)) => n.to_string(),
        _ => required_str(obj, line, "id")?,
    };
    let video = PathBuf::from(required_str(obj, line, "video")?);
    let mut question = QuestionSpec::open(required_str(obj, line, "question")?);
    question.question_type_tag = optional_str(obj, line, "type_tag")?;
    question.dataset_id = optional_str(obj, line, "dataset")?;

    let ground_truth = match format {
        ManifestFormat::Mcq => {
            if obj.contains_key("answers") {
                return Err(parse_error(line, "answers", "not allowed in mcq manifests"));
            }
            let options = string_list(obj, line, "options")?;
            let index = obj
                .get("answer")
                .ok_or_else(|| parse_error(line, "answer", "missing"))?
                .as_u64()
                .ok_or_else(|| parse_error(line, "answer", "must be a 0-based option index"))?
                as usize;
            if index >= options.len() {
                return Err(parse_error(line, "answer", format!("index {index} out of range")));
            }
            question.options = Some(options);
            GroundTruth::OptionIndex(index)
        }
        ManifestFormat::OpenSet => {
            if obj.contains_key("answer") {
                return Err(parse_error(line, "answer", "not allowed in open_set manifests"));
            }
            GroundTruth::AnswerSet(string_list(obj, line, "answers")?)
        }
        ManifestFormat::OpenSingle => {
            if obj.contains_key("answers") {
                return Err(parse_error(line, "answers", "not allowed in open_single manifests"));
            }
            GroundTruth::Answer(required_str(obj, line, "answer")?)
        }
    };
    if !matches!(format, ManifestFormat::Mcq) && obj.contains_key("options") {
        return Err(parse_error(line, "options", "only allowed in mcq manifests"));
    }
    question
        .validate()
        .map_err(|e| parse_error(line, "options", e.to_string()))?;
    Ok(DatasetItem {
        item_id,
        video: if video.is_relative() { base.join(video) } else { video },
        question,
        ground_truth,
    })
}

/// Parses manifest text. Blank lines are skipped; items come back sorted by
/// id and ids must be unique.
pub fn parse_manifest(text: &str, format: ManifestFormat, base: &Path) -> Result<Vec<DatasetItem>, BenchError> {
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = parse_line(line, i + 1, format, base)?;
        if !ids.insert(item.item_id.clone()) {
            return Err(parse_error(i + 1, "id", format!("duplicate id {:?}", item.item_id)));
        }
        items.push(item);
    }
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(items)
}

pub fn load_dataset(path: &Path, format: ManifestFormat) -> Result<Vec<DatasetItem>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::ManifestIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_manifest(&text, format, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("answer matches no option")]
    NoMatch,
    #[error("answer matches several options: {0:?}")]
    AmbiguousMatch(Vec<usize>),
}

fn bare_integer(answer: &str) -> Option<i64> {
    let t = answer.trim().trim_end_matches('.');
    let t = t.strip_prefix('(').and_then(|t| t.strip_suffix(')')).unwrap_or(t);
    t.trim().parse().ok()
}

/// Resolves a model answer to an option index.
///
/// In order: a bare in-range 0-based integer (an integer equal to the number
/// of options is read as 1-based); a case-insensitive exact match; a unique
/// case-insensitive containment either way round.
pub fn match_option(answer: &str, options: &[String]) -> Result<usize, MatchError> {
    let n = options.len() as i64;
    if let Some(i) = bare_integer(answer) {
        if (0..n).contains(&i) {
            return Ok(i as usize);
        }
        if i == n && n > 0 {
            log::info!("reading answer {i} as a 1-based option index");
            return Ok((i - 1) as usize);
        }
    }
    let folded = answer.trim().to_lowercase();
    if folded.is_empty() {
        return Err(MatchError::NoMatch);
    }
    let lowered: Vec<String> = options.iter().map(|o| o.trim().to_lowercase()).collect();
    if let Some(i) = lowered.iter().position(|o| *o == folded) {
        return Ok(i);
    }
    let hits: Vec<usize> = lowered
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.is_empty() && (folded.contains(o.as_str()) || o.contains(&folded)))
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [] => Err(MatchError::NoMatch),
        [i] => Ok(*i),
        _ => {
            log::warn!("answer {answer:?} matches several options {hits:?}");
            Err(MatchError::AmbiguousMatch(hits))
        }
    }
}

/// Lower-cases, drops punctuation and the articles `a`, `an`, `the`, and
/// collapses whitespace.
pub fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn matches_answer_set(prediction: &str, answers: &[String]) -> bool {
    let p = normalize_text(prediction);
    answers.iter().any(|a| normalize_text(a) == p)
}

fn judge_verdict(text: &str) -> Option<bool> {
    match text.trim().to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Asks the LLM judge whether an open-ended prediction is correct. Only a
/// bare `yes` or `no` is accepted; anything else is asked once more.
pub fn eval_open_answer(
    backends: &Backends,
    cfg: &EngineConfig,
    question: &QuestionSpec,
    ground_truth: &str,
    predicted: &FinalAnswer,
) -> Result<bool, BenchError> {
    let prompt = render_open_answer_judge(
        &question.question,
        ground_truth,
        &predicted.answer,
        &predicted.reasoning,
    );
    let mut last = String::new();
    for attempt in 0..2 {
        let mut req = ModelRequest::text(&cfg.judge_model, prompt.clone());
        req.attempt = attempt;
        let resp = backends.models.complete_text(req)?;
        if let Some(v) = judge_verdict(&resp.raw_text) {
            return Ok(v);
        }
        last = resp.raw_text;
    }
    Err(BenchError::JudgeProtocolViolation(last))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    OptionMatch,
    TextSetMatch,
    LlmJudge,
}

impl EvalMethod {
    fn for_truth(truth: &GroundTruth) -> Self {
        match truth {
            GroundTruth::OptionIndex(_) => EvalMethod::OptionMatch,
            GroundTruth::AnswerSet(_) => EvalMethod::TextSetMatch,
            GroundTruth::Answer(_) => EvalMethod::LlmJudge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_tag: Option<String>,
    pub predicted: Option<FinalAnswer>,
    pub correct: bool,
    pub method: EvalMethod,
    /// Stage (or `judge`) that failed, when the item could not be scored normally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub model_calls: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub by_tag: BTreeMap<String, TagStats>,
    pub refined: usize,
    pub first_sight: usize,
    pub failures: usize,
    pub warnings: Warnings,
    pub items: Vec<EvalResult>,
}

impl BenchReport {
    pub fn from_results(mut items: Vec<EvalResult>, warnings: Warnings) -> Self {
        items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let total = items.len();
        let correct = items.iter().filter(|r| r.correct).count();
        let mut tags: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in &items {
            if let Some(tag) = &r.type_tag {
                let e = tags.entry(tag.clone()).or_default();
                e.0 += 1;
                e.1 += r.correct as usize;
            }
        }
        let provenance = |p: Provenance| {
            items
                .iter()
                .filter(|r| r.failure.is_none() && r.predicted.as_ref().is_some_and(|f| f.provenance == p))
                .count()
        };
        Self {
            total,
            correct,
            accuracy: ratio(correct, total),
            by_tag: tags
                .into_iter()
                .map(|(tag, (t, c))| (tag, TagStats { total: t, correct: c, accuracy: ratio(c, t) }))
                .collect(),
            refined: provenance(Provenance::Refined),
            first_sight: provenance(Provenance::FirstSight),
            failures: items.iter().filter(|r| r.failure.is_some()).count(),
            warnings,
            items,
        }
    }

    pub fn failure_rate(&self) -> f64 {
        ratio(self.failures, self.total)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text summary; per-tag rows only when `tag_breakdown` is set.
    pub fn to_text(&self, tag_breakdown: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "accuracy {:.4}", self.accuracy);
        let _ = writeln!(out, "correct {}/{}", self.correct, self.total);
        let _ = writeln!(out, "refined {}  first_sight {}  failures {}", self.refined, self.first_sight, self.failures);
        if tag_breakdown && !self.by_tag.is_empty() {
            let _ = writeln!(out, "{:<8} {:>6} {:>8} {:>9}", "tag", "items", "correct", "accuracy");
            for (tag, s) in &self.by_tag {
                let _ = writeln!(out, "{:<8} {:>6} {:>8} {:>9.4}", format!("Acc@{tag}"), s.total, s.correct, s.accuracy);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path, tag_breakdown: bool) -> Result<(), BenchError> {
        let io = |e: std::io::Error| BenchError::Report(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.json"), self.to_json()).map_err(io)?;
        std::fs::write(dir.join("report.txt"), self.to_text(tag_breakdown)).map_err(io)?;
        Ok(())
    }
}

/// Scores a prediction against the item's ground truth.
pub fn score(
    backends: &Backends,
    cfg: &EngineConfig,
    item: &DatasetItem,
    predicted: &FinalAnswer,
) -> Result<bool, BenchError> {
    Ok(match &item.ground_truth {
        GroundTruth::OptionIndex(i) => predicted.chosen_option_index == Some(*i),
        GroundTruth::AnswerSet(answers) => matches_answer_set(&predicted.answer, answers),
        GroundTruth::Answer(truth) => eval_open_answer(backends, cfg, &item.question, truth, predicted)?,
    })
}

fn evaluate(backends: &Backends, cfg: &EngineConfig, item: &DatasetItem) -> (EvalResult, Warnings) {
    let mut result = EvalResult {
        item_id: item.item_id.clone(),
        type_tag: item.question.question_type_tag.clone(),
        predicted: None,
        correct: false,
        method: EvalMethod::for_truth(&item.ground_truth),
        failure: None,
        model_calls: 0,
        flags: Vec::new(),
    };
    match run_question_at(backends, cfg, &item.video, &item.question) {
        Ok(record) => {
            result.model_calls = record.model_calls();
            result.flags = record.flags.clone();
            let predicted = record.final_answer.clone().expect("completed runs carry a final answer");
            match score(backends, cfg, item, &predicted) {
                Ok(correct) => result.correct = correct,
                Err(e) => {
                    log::warn!("{}: scoring failed: {e}", item.item_id);
                    result.failure = Some("judge".into());
                }
            }
            result.predicted = Some(predicted);
            (result, record.warnings)
        }
        Err(failure) => {
            log::warn!("{}: {failure}", item.item_id);
            result.model_calls = failure.partial.model_calls();
            result.flags = failure.partial.flags.clone();
            result.predicted = failure.partial.final_answer.clone();
            result.failure = Some(failure.stage.to_string());
            (result, failure.partial.warnings.clone())
        }
    }
}

/// Runs every item with at most `concurrency` in flight. Item failures are
/// scored incorrect and never stop the sweep.
pub fn run_benchmark(
    backends: &Backends,
    cfg: &EngineConfig,
    items: &[DatasetItem],
    concurrency: usize,
) -> BenchReport {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    let outcomes: Vec<(EvalResult, Warnings)> =
        pool.install(|| items.par_iter().map(|item| evaluate(backends, cfg, item)).collect());
    let mut warnings = Warnings::default();
    for (_, w) in &outcomes {
        warnings.add(w);
    }
    BenchReport::from_results(outcomes.into_iter().map(|(r, _)| r).collect(), warnings)
}
