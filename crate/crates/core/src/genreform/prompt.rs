use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::Passage;
use crate::error::{Error, Result};

/// Input ceiling of the generator, in (whitespace) tokens.
pub const MAX_PROMPT_TOKENS: usize = 512;

const FLAN_PREFIX: &str = "Improve the search effectiveness by suggesting expansion terms for the query:";
const FLAN_CONTEXT: &str = "based on the given context information:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    T5Qr,
    T5Prf,
    FlanQr,
    FlanPrf,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [PromptKind::T5Qr, PromptKind::T5Prf, PromptKind::FlanQr, PromptKind::FlanPrf];

    pub fn needs_context(self) -> bool {
        matches!(self, PromptKind::T5Prf | PromptKind::FlanPrf)
    }

    /// Fine-tuned T5 kinds, as opposed to prompted FLAN-T5.
    pub fn is_t5(self) -> bool {
        matches!(self, PromptKind::T5Qr | PromptKind::T5Prf)
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::T5Qr => "t5qr",
            PromptKind::T5Prf => "t5prf",
            PromptKind::FlanQr => "flanqr",
            PromptKind::FlanPrf => "flanprf",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown prompt kind {s:?}")))
    }
}

/// Whitespace token count, the budget unit for prompts.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Render the generator input for one query.
///
/// ```
/// use qreform::genreform::{build_prompt, PromptKind};
/// assert_eq!(build_prompt(PromptKind::T5Qr, "define visceral", &[]).unwrap(), "refine: define visceral");
/// ```
///
/// Context passages are joined with single spaces. When query plus context
/// would exceed [`MAX_PROMPT_TOKENS`], the context is cut from its end (so the
/// last passage shrinks first) and a warning is logged. The end-of-sequence
/// token is left to the service's tokenizer.
pub fn build_prompt(kind: PromptKind, query: &str, context: &[Passage]) -> Result<String> {
    let query = query.split_whitespace().collect::<Vec<_>>().join(" ");
    if !kind.needs_context() {
        let prompt = match kind {
            PromptKind::T5Qr => format!("refine: {query}"),
            _ => format!("{FLAN_PREFIX} {query}"),
        };
        if estimate_tokens(&prompt) > MAX_PROMPT_TOKENS {
            log::warn!("{kind} prompt is {} tokens, over the {MAX_PROMPT_TOKENS} limit", estimate_tokens(&prompt));
        }
        return Ok(prompt);
    }

    let words: Vec<&str> = context.iter().flat_map(|p| p.text.split_whitespace()).collect();
    if words.is_empty() {
        return Err(Error::Usage(format!("{kind} needs at least one non-empty context passage")));
    }
    let render = |ctx: &str| match kind {
        PromptKind::T5Prf => format!("refine: {query} context: {ctx}"),
        _ => format!("{FLAN_PREFIX} {query}, {FLAN_CONTEXT} {ctx}"),
    };
    let fixed = estimate_tokens(&render(""));
    if fixed >= MAX_PROMPT_TOKENS {
        return Err(Error::Usage(format!(
            "query alone uses {fixed} prompt tokens, leaving no room for context"
        )));
    }
    let budget = MAX_PROMPT_TOKENS - fixed;
    let kept = if words.len() > budget {
        log::warn!(
            "{kind} context truncated from {} to {budget} tokens to fit the {MAX_PROMPT_TOKENS}-token input",
            words.len()
        );
        &words[..budget]
    } else {
        &words[..]
    };
    Ok(render(&kept.join(" ")))
}
