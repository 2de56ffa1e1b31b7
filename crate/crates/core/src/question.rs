use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuestionError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("option list is present but empty")]
    EmptyOptions,
    #[error("duplicate option {0:?}")]
    DuplicateOption(String),
}

/// A question `Q` with optional close-ended answer options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type_tag: Option<String>,
}

impl QuestionSpec {
    pub fn open(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            options: None,
            dataset_id: None,
            question_type_tag: None,
        }
    }

    pub fn with_options<I, S>(question: impl Into<String>, options: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            options: Some(options.into_iter().map(Into::into).collect()),
            ..Self::open(question)
        }
    }

    pub fn validate(&self) -> Result<(), QuestionError> {
        if self.question.trim().is_empty() {
            return Err(QuestionError::EmptyQuestion);
        }
        if let Some(options) = &self.options {
            if options.is_empty() {
                return Err(QuestionError::EmptyOptions);
            }
            for (i, opt) in options.iter().enumerate() {
                if options[..i].contains(opt) {
                    return Err(QuestionError::DuplicateOption(opt.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn is_close_ended(&self) -> bool {
        self.options.is_some()
    }

    /// `Question` and, when present, `Options` prompt sections.
    pub fn sections(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("Question", self.question.trim().to_string())];
        if let Some(options) = &self.options {
            let listed: Vec<String> = options.iter().enumerate().map(|(i, o)| format!("{i}. {o}")).collect();
            out.push(("Options", listed.join("\n")));
        }
        out
    }

    /// The question followed by its indexed options, as shown to every model
    /// that receives the "prompt" (question plus answer options).
    pub fn render(&self) -> String {
        let mut out = format!("Question: {}\n", self.question.trim());
        if let Some(options) = &self.options {
            out.push_str("Options:\n");
            for (i, opt) in options.iter().enumerate() {
                out.push_str(&format!("{i}. {opt}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FirstSight,
    Refined,
}

/// The pipeline's single answer for a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub answer: String,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_option_index: Option<usize>,
    pub provenance: Provenance,
    pub transcript_ids: Vec<String>,
}
