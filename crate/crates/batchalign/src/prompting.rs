//! Prompt rendering and response parsing for the controlled RAG probe.
//!
//! The instruction template stays in English for every language; only the
//! query and passage payloads are localized. Rendering is byte-stable and a
//! golden file in `tests/golden/` pins the exact bytes.

use crate::corpus::LanguageId;
use crate::dataset::{Sample, PASSAGES_PER_SAMPLE};

/// Canonical affirmative response, as written in the instruction template.
pub const YES_RESPONSE: &str = "Yes, answer is present";
/// Canonical abstention response. The apostrophe is typographic (U+2019);
/// the parser also accepts the ASCII form.
pub const IDK_RESPONSE: &str = "I don’t know";

const INSTRUCTION: &str = "I will give you a question and several contexts containing \
information about the question. Read the contexts carefully. If any of the contexts answers \
the question, respond as either “Yes, answer is present” or “I don’t know”:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub language: LanguageId,
    pub sample_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ResponseLabel {
    Yes,
    Idk,
    Invalid,
}

/// Renders the fixed template with the sample's query and its ten passages,
/// in passage order, terminated by "OUTPUT:".
pub fn render_prompt(sample: &Sample) -> RenderedPrompt {
    debug_assert_eq!(sample.passages.len(), PASSAGES_PER_SAMPLE);
    let mut text = String::with_capacity(1024);
    text.push_str(INSTRUCTION);
    text.push('\n');
    text.push_str("QUESTION: ");
    text.push_str(&sample.query_text);
    text.push('\n');
    text.push_str("CONTEXTS:\n");
    for (i, passage) in sample.passages.iter().enumerate() {
        text.push_str(&format!("[{}] {}: {}\n", i + 1, passage.title, passage.body));
    }
    text.push_str("OUTPUT:");
    RenderedPrompt {
        text,
        language: sample.language.clone(),
        sample_id: sample.sample_id.clone(),
    }
}

fn fold(text: &str) -> String {
    text.trim()
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c.to_ascii_lowercase() })
        .collect()
}

/// Maps raw model output to a label: trim plus ASCII case fold, exact match
/// against the two canonical strings, everything else is `Invalid`. Total;
/// never errors.
pub fn parse_response(text: &str) -> ResponseLabel {
    let folded = fold(text);
    if folded == fold(YES_RESPONSE) {
        ResponseLabel::Yes
    } else if folded == fold(IDK_RESPONSE) {
        ResponseLabel::Idk
    } else {
        ResponseLabel::Invalid
    }
}
