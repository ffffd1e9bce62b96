//! Prompt templates and single-pass slot rendering.
//!
//! Templates live in `templates/<id>.v<version>.txt` and use `{slot}`
//! markers. Rendering substitutes each marker exactly once, so slot values
//! that happen to contain `{...}` are copied through untouched.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    QuestionGeneration,
    SummaryZeroShot,
    SummaryIcl,
    SummaryWithPlan,
    ExplanatoryExtraction,
    IrrelevantQuestion,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::QuestionGeneration,
        TemplateId::SummaryZeroShot,
        TemplateId::SummaryIcl,
        TemplateId::SummaryWithPlan,
        TemplateId::ExplanatoryExtraction,
        TemplateId::IrrelevantQuestion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::QuestionGeneration => "question_generation",
            TemplateId::SummaryZeroShot => "summary_zero_shot",
            TemplateId::SummaryIcl => "summary_icl",
            TemplateId::SummaryWithPlan => "summary_with_plan",
            TemplateId::ExplanatoryExtraction => "explanatory_extraction",
            TemplateId::IrrelevantQuestion => "irrelevant_question",
        }
    }

    pub fn version(self) -> u32 {
        1
    }

    pub fn source(self) -> &'static str {
        match self {
            TemplateId::QuestionGeneration => include_str!("../templates/question_generation.v1.txt"),
            TemplateId::SummaryZeroShot => include_str!("../templates/summary_zero_shot.v1.txt"),
            TemplateId::SummaryIcl => include_str!("../templates/summary_icl.v1.txt"),
            TemplateId::SummaryWithPlan => include_str!("../templates/summary_with_plan.v1.txt"),
            TemplateId::ExplanatoryExtraction => include_str!("../templates/explanatory_extraction.v1.txt"),
            TemplateId::IrrelevantQuestion => include_str!("../templates/irrelevant_question.v1.txt"),
        }
    }

    /// Slot names in order of first appearance.
    pub fn slots(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for c in SLOT_RE.captures_iter(self.source()) {
            let name = c.get(1).expect("group").as_str();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.v{}", self.as_str(), self.version())
    }
}

static SLOT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("slot pattern"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRendering {
    pub template: TemplateId,
    pub text: String,
    pub slots: BTreeMap<String, String>,
}

/// Fills every slot of `template`. Missing or unknown slot names are errors.
pub fn render(template: TemplateId, values: &[(&str, &str)]) -> Result<PromptRendering> {
    let slots: BTreeMap<String, String> = values
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let expected = template.slots();
    if let Some(extra) = slots.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(Error::invalid(format!("template {template} has no slot `{extra}`")));
    }
    let src = template.source();
    let mut text = String::with_capacity(src.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut last = 0;
    for c in SLOT_RE.captures_iter(src) {
        let m = c.get(0).expect("match");
        let name = &c[1];
        let value = slots
            .get(name)
            .ok_or_else(|| Error::invalid(format!("template {template} needs slot `{name}`")))?;
        text.push_str(&src[last..m.start()]);
        text.push_str(value);
        last = m.end();
    }
    text.push_str(&src[last..]);
    Ok(PromptRendering { template, text, slots })
}

/// Numbered plan questions, one per line: `1. ...\n2. ...`.
pub fn numbered_questions<'a>(questions: impl IntoIterator<Item = &'a str>) -> String {
    questions
        .into_iter()
        .enumerate()
        .map(|(i, q)| format!("{}. {q}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}
