//! Offline stand-ins for the generation and scoring services.
//!
//! Generation fixtures hold one JSON object per line:
//! `{"prompt_sha256": "...", "results": [{"text": "...", "log_likelihood": -0.5}]}`.
//! An optional `prompt` field carries the prompt verbatim for readability and
//! is checked against the hash on load.
//!
//! Score fixtures hold `{"query": "...", "passage_sha256": "...", "score": 0.7}`
//! lines, plus at most one `{"default_score": 0.0}` line used for pairs
//! without an entry.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{GenerationRequest, Generator, RelevanceScorer};
use super::wire::GenerationResult;
use crate::error::{Error, Result};

/// Lowercase hex SHA-256 of the UTF-8 bytes of `text`.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub results: Vec<GenerationResult>,
}

impl FixtureEntry {
    pub fn for_prompt(prompt: &str, results: Vec<GenerationResult>) -> Self {
        FixtureEntry {
            prompt_sha256: sha256_hex(prompt),
            prompt: Some(prompt.to_string()),
            results,
        }
    }
}

/// Canned generations keyed by prompt hash. Fully deterministic.
#[derive(Debug, Clone, Default)]
pub struct FixtureGenerator {
    entries: HashMap<String, Vec<GenerationResult>>,
}

impl FixtureGenerator {
    pub fn new(entries: impl IntoIterator<Item = FixtureEntry>) -> Result<Self> {
        let mut map = HashMap::new();
        for e in entries {
            if let Some(prompt) = &e.prompt {
                if sha256_hex(prompt) != e.prompt_sha256 {
                    return Err(Error::Config(format!(
                        "fixture prompt does not hash to {}: {prompt:.80}",
                        e.prompt_sha256
                    )));
                }
            }
            if map.insert(e.prompt_sha256.clone(), e.results).is_some() {
                return Err(Error::Config(format!("duplicate fixture entry {}", e.prompt_sha256)));
            }
        }
        Ok(FixtureGenerator { entries: map })
    }

    pub fn parse(contents: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("generation fixture line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        FixtureGenerator::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FixtureGenerator::parse(&contents)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Generator for FixtureGenerator {
    fn candidates(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>> {
        let key = sha256_hex(&request.prompt);
        self.entries.get(&key).cloned().ok_or(Error::FixtureMiss(key))
    }
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ScoreLine {
    Entry {
        query: String,
        passage_sha256: String,
        score: f64,
    },
    Default {
        default_score: f64,
    },
}

/// Canned relevance scores keyed by (query, passage hash).
#[derive(Debug, Clone, Default)]
pub struct FixtureScorer {
    scores: HashMap<(String, String), f64>,
    default: Option<f64>,
}

impl FixtureScorer {
    /// A scorer that returns `score` for everything.
    pub fn constant(score: f64) -> Self {
        FixtureScorer {
            scores: HashMap::new(),
            default: Some(score),
        }
    }

    pub fn insert(&mut self, query: &str, passage: &str, score: f64) {
        self.scores.insert((query.to_string(), sha256_hex(passage)), score);
    }

    pub fn parse(contents: &str) -> Result<Self> {
        let mut scorer = FixtureScorer::default();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScoreLine = serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("score fixture line {}: {e}", i + 1)))?;
            match parsed {
                ScoreLine::Entry { query, passage_sha256, score } => {
                    scorer.scores.insert((query, passage_sha256), score);
                }
                ScoreLine::Default { default_score } => {
                    if scorer.default.replace(default_score).is_some() {
                        return Err(Error::Config("score fixture has more than one default_score".into()));
                    }
                }
            }
        }
        Ok(scorer)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FixtureScorer::parse(&contents)
    }
}

impl RelevanceScorer for FixtureScorer {
    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        let key = (query.to_string(), sha256_hex(passage));
        self.scores
            .get(&key)
            .copied()
            .or(self.default)
            .ok_or(Error::FixtureMiss(key.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_string() {
        assert_eq!(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn lookup_by_prompt_hash() {
        let line = serde_json::to_string(&FixtureEntry::for_prompt(
            "refine: define visceral",
            vec![GenerationResult::new("visceral meaning", -0.3)],
        ))
        .unwrap();
        let fx = FixtureGenerator::parse(&line).unwrap();
        let hit = fx.candidates(&GenerationRequest::new("1", "refine: define visceral")).unwrap();
        assert_eq!(hit[0].text, "visceral meaning");
        let miss = fx.candidates(&GenerationRequest::new("1", "refine: other")).unwrap_err();
        assert!(matches!(miss, Error::FixtureMiss(_)));
    }

    #[test]
    fn mismatched_prompt_hash_is_rejected() {
        let line = r#"{"prompt_sha256": "00", "prompt": "x", "results": []}"#;
        assert!(FixtureGenerator::parse(line).is_err());
    }

    #[test]
    fn score_fixture_with_default() {
        let h = sha256_hex("passage one");
        let text = format!("{{\"query\": \"q\", \"passage_sha256\": \"{h}\", \"score\": 0.9}}\n{{\"default_score\": 0.1}}\n");
        let s = FixtureScorer::parse(&text).unwrap();
        assert_eq!(s.score("q", "passage one").unwrap(), 0.9);
        assert_eq!(s.score("q", "other").unwrap(), 0.1);
        assert!(FixtureScorer::default().score("q", "p").is_err());
    }
}
