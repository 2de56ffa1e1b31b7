//! Prompt templates and output schemas for every model call.
//!
//! The template texts live in `templates/` and are sent byte-for-byte as the
//! head of each prompt. The analyzer and final-reasoner templates end with an
//! empty line reserved for a dataset-specific answer-format subinstruction.
//! Call inputs follow the template as titled sections.

use std::path::Path;

use serde_json::{json, Value};

use crate::question::QuestionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub text: &'static str,
    /// Whether the template ends with the answer-format slot.
    pub answer_slot: bool,
}

pub const VLLM_ANALYZER: PromptTemplate = PromptTemplate {
    name: "vllm_prompt_1",
    text: include_str!("templates/vllm_prompt_1.txt"),
    answer_slot: true,
};

pub const VLLM_CAPTIONER: PromptTemplate = PromptTemplate {
    name: "vllm_prompt_2",
    text: include_str!("templates/vllm_prompt_2.txt"),
    answer_slot: false,
};

pub const VLLM_TARGET_FINDER: PromptTemplate = PromptTemplate {
    name: "vllm_prompt_3",
    text: include_str!("templates/vllm_prompt_3.txt"),
    answer_slot: false,
};

pub const VLLM_QA: PromptTemplate = PromptTemplate {
    name: "vllm_prompt_4",
    text: include_str!("templates/vllm_prompt_4.txt"),
    answer_slot: false,
};

pub const LLM_COMPARATOR: PromptTemplate = PromptTemplate {
    name: "llm_prompt_1",
    text: include_str!("templates/llm_prompt_1.txt"),
    answer_slot: false,
};

pub const LLM_QUESTION_GENERATOR: PromptTemplate = PromptTemplate {
    name: "llm_prompt_2",
    text: include_str!("templates/llm_prompt_2.txt"),
    answer_slot: false,
};

pub const LLM_FINAL_REASONER: PromptTemplate = PromptTemplate {
    name: "llm_prompt_3",
    text: include_str!("templates/llm_prompt_3.txt"),
    answer_slot: true,
};

pub const ALL_TEMPLATES: [PromptTemplate; 7] = [
    VLLM_ANALYZER,
    VLLM_CAPTIONER,
    VLLM_TARGET_FINDER,
    VLLM_QA,
    LLM_COMPARATOR,
    LLM_QUESTION_GENERATOR,
    LLM_FINAL_REASONER,
];

/// Yes/no grader for open-ended answers with a single reference answer.
/// Placeholders: `{q}`, `{a}`, `{p}`, `{r}`.
pub const OPEN_ANSWER_JUDGE: &str = include_str!("templates/open_answer_judge.txt");

pub const DEFAULT_CLOSE_ENDED_SUBINSTRUCTION: &str =
    "Answer with the index (starting at 0) of the selected option.";
pub const DEFAULT_OPEN_ENDED_SUBINSTRUCTION: &str =
    "Answer with a short phrase of at most three words.";

impl PromptTemplate {
    /// Builds the full prompt: template, optional subinstruction in the
    /// trailing slot, then each `(title, body)` section.
    pub fn compose(&self, subinstruction: Option<&str>, sections: &[(&str, String)]) -> String {
        let mut out = String::from(self.text);
        if self.answer_slot {
            if let Some(sub) = subinstruction.map(str::trim).filter(|s| !s.is_empty()) {
                out.push_str(sub);
                out.push('\n');
            }
        }
        for (title, body) in sections {
            out.push('\n');
            out.push_str(title);
            out.push_str(":\n");
            out.push_str(body.trim_end());
            out.push('\n');
        }
        out
    }
}

/// The answer-format subinstruction for a question.
///
/// Looks for `<dir>/<dataset_id>.txt` first and falls back to a built-in
/// default that depends on whether the question has options.
pub fn subinstruction(dir: Option<&Path>, question: &QuestionSpec) -> String {
    if let (Some(dir), Some(id)) = (dir, question.dataset_id.as_deref()) {
        if let Ok(text) = std::fs::read_to_string(dir.join(format!("{id}.txt"))) {
            return text.trim().to_string();
        }
    }
    if question.is_close_ended() {
        DEFAULT_CLOSE_ENDED_SUBINSTRUCTION.into()
    } else {
        DEFAULT_OPEN_ENDED_SUBINSTRUCTION.into()
    }
}

/// Fills `{q}`, `{a}`, `{p}`, `{r}` in one pass, so braces inside the
/// substituted values are left alone.
pub fn render_open_answer_judge(q: &str, a: &str, p: &str, r: &str) -> String {
    let mut out = String::with_capacity(OPEN_ANSWER_JUDGE.len() + q.len() + a.len() + p.len() + r.len());
    let mut rest = OPEN_ANSWER_JUDGE;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let value = match tail.get(..3) {
            Some("{q}") => Some(q),
            Some("{a}") => Some(a),
            Some("{p}") => Some(p),
            Some("{r}") => Some(r),
            _ => None,
        };
        match value {
            Some(v) => {
                out.push_str(v);
                rest = &tail[3..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn object_schema(properties: Value) -> Value {
    json!({ "type": "object", "properties": properties })
}

fn string_list() -> Value {
    json!({ "type": "array", "items": { "type": "string" } })
}

pub fn analyzer_schema() -> Value {
    object_schema(json!({ "reasoning": { "type": "string" }, "answer": { "type": "string" } }))
}

pub fn captioner_schema() -> Value {
    object_schema(json!({ "timeframes": string_list() }))
}

pub fn target_finder_schema() -> Value {
    object_schema(json!({ "targets": string_list() }))
}

pub fn qa_schema() -> Value {
    object_schema(json!({ "answer": { "type": "string" } }))
}

pub fn comparator_schema() -> Value {
    object_schema(json!({ "reasoning": { "type": "string" }, "disagree": { "type": "boolean" } }))
}

pub fn question_generator_schema() -> Value {
    object_schema(json!({ "questions": string_list() }))
}

pub fn final_reasoner_schema() -> Value {
    object_schema(json!({ "reasoning": { "type": "string" }, "answer": { "type": "string" } }))
}
