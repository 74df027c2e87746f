//! JSON bodies of the generation service protocol.
//!
//! ```text
//! POST /generate  {id, prompt, num_return, beam_size, max_new_tokens}
//!              -> {id, results: [{text, log_likelihood}]}
//! POST /score     {id, query, passage} -> {id, score}
//! errors          {id, error: {code, message}} with HTTP 4xx/5xx
//! ```
//!
//! Likelihoods are natural-log sequence probabilities. Decoding is strict:
//! unknown fields are a protocol error.

use serde::{Deserialize, Serialize};

/// The JSON Schema describing every body above, shared with the model sidecar.
pub const WIRE_SCHEMA: &str = include_str!("../../data/wire_schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequestBody {
    pub id: String,
    pub prompt: String,
    pub num_return: usize,
    pub beam_size: usize,
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationResult {
    pub text: String,
    /// Natural-log joint probability of the sequence; `exp` of it is the
    /// paraphrase weight.
    pub log_likelihood: f64,
}

impl GenerationResult {
    pub fn new(text: impl Into<String>, log_likelihood: f64) -> Self {
        GenerationResult {
            text: text.into(),
            log_likelihood,
        }
    }

    /// Auto-regressive sequence likelihood: the product of per-token
    /// probabilities, carried as a sum of logs.
    pub fn from_token_probabilities(text: impl Into<String>, token_probs: &[f64]) -> Self {
        GenerationResult::new(text, token_probs.iter().map(|p| p.ln()).sum())
    }

    /// The joint likelihood itself.
    pub fn weight(&self) -> f64 {
        self.log_likelihood.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateResponseBody {
    pub id: String,
    pub results: Vec<GenerationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequestBody {
    pub id: String,
    pub query: String,
    pub passage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreResponseBody {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorResponseBody {
    pub id: String,
    pub error: ErrorDetail,
}
