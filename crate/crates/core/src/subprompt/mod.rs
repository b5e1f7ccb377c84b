//! Sub-prompt text generation.
//!
//! A short user prompt is first expanded into one detailed prompt (the
//! finest sub-prompt), which is then simplified into four coarser versions.
//! Both requests use fixed instruction templates shipped in `assets/`.

pub mod client;
pub mod fixtures;
pub mod parser;

use serde::{Deserialize, Serialize};

pub use client::{
    ChatTransport, HttpReply, LlmClient, LlmClientConfig, LlmError, TransportError, UreqTransport,
    API_KEY_ENV,
};
pub use parser::{format_prompt_list, parse_prompt_list, ParseError};

pub const ENHANCEMENT_TEMPLATE: &str = include_str!("../../assets/enhancement_prompt.txt");
pub const SIMPLIFICATION_TEMPLATE: &str = include_str!("../../assets/simplification_prompt.txt");

/// Number of simplified levels requested from the model.
pub const LEVEL_COUNT: usize = 4;

/// The enhanced prompt and its simplified levels, in the order the model
/// produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubPromptTexts {
    pub enhanced: String,
    pub levels: Vec<String>,
}

impl SubPromptTexts {
    pub fn new(enhanced: String, levels: Vec<String>) -> Result<Self, LlmError> {
        if levels.len() != LEVEL_COUNT {
            return Err(LlmError::CountMismatch {
                expected: LEVEL_COUNT,
                found: levels.len(),
            });
        }
        if enhanced.trim().is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        if let Some(i) = levels.iter().position(|l| l.trim().is_empty()) {
            return Err(LlmError::Parse(ParseError::EmptyItem(i)));
        }
        Ok(Self { enhanced, levels })
    }

    /// Texts in embedding order: the levels, then the enhanced prompt last.
    pub fn ordered(&self) -> Vec<&str> {
        self.levels
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.enhanced.as_str()))
            .collect()
    }
}

fn require_nonempty(text: &str, what: &str) -> Result<(), LlmError> {
    if text.trim().is_empty() {
        return Err(LlmError::Precondition(format!("{what} must not be empty")));
    }
    Ok(())
}

/// Expand `prompt` into one detailed prompt.
pub fn enhance_prompt<T: ChatTransport>(
    prompt: &str,
    client: &LlmClient<T>,
) -> Result<String, LlmError> {
    require_nonempty(prompt, "prompt")?;
    client.complete(ENHANCEMENT_TEMPLATE, prompt)
}

/// The user message for the simplification request, framed like the
/// template's worked example.
pub fn simplification_request(enhanced: &str) -> String {
    format!("Description:\n{}\n\nOutput:", enhanced.trim())
}

/// Ask for four simplified versions of `enhanced`.
pub fn simplify_prompt<T: ChatTransport>(
    enhanced: &str,
    client: &LlmClient<T>,
) -> Result<Vec<String>, LlmError> {
    require_nonempty(enhanced, "enhanced prompt")?;
    let completion = client.complete(SIMPLIFICATION_TEMPLATE, &simplification_request(enhanced))?;
    parse_levels(&completion)
}

/// Parse a simplification completion into exactly [`LEVEL_COUNT`] strings.
pub fn parse_levels(completion: &str) -> Result<Vec<String>, LlmError> {
    let items = parse_prompt_list(completion)?;
    if items.len() != LEVEL_COUNT {
        return Err(LlmError::CountMismatch {
            expected: LEVEL_COUNT,
            found: items.len(),
        });
    }
    Ok(items)
}

/// Enhance then simplify. Fails as a whole if either request fails.
pub fn build_subprompt_texts<T: ChatTransport>(
    prompt: &str,
    client: &LlmClient<T>,
) -> Result<SubPromptTexts, LlmError> {
    let enhanced = enhance_prompt(prompt, client)?;
    let levels = simplify_prompt(&enhanced, client)?;
    SubPromptTexts::new(enhanced, levels)
}
