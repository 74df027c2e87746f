//! Contextual input for PRF-conditioned reformulation.
//!
//! Feedback documents are cut into overlapping word windows, each window is
//! scored against the original query, and one of three selectors picks the
//! `M` passages that become the generator's context:
//!
//! * [`Selector::FirstP`]: best `M` among the first passage of each feedback document.
//! * [`Selector::TopP`]: best `M` among all passages of all feedback documents.
//! * [`Selector::MaxP`]: best passage per document, then the best `M` of those.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{Bm25Params, Index, Ranking, WeightedQuery};

/// Largest number of context passages that fits the generator's 512-token input.
pub const MAX_PASSAGES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub doc_id: String,
    pub window_index: usize,
    pub tokens: Vec<String>,
    /// Tokens joined by single spaces.
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    FirstP,
    TopP,
    MaxP,
}

impl std::str::FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "firstp" => Ok(Selector::FirstP),
            "topp" => Ok(Selector::TopP),
            "maxp" => Ok(Selector::MaxP),
            _ => Err(Error::Config(format!("unknown context selector {s:?} (firstp, topp, maxp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextConfig {
    pub fb_docs: usize,
    pub window: usize,
    pub stride: usize,
    pub num_passages: usize,
    pub selector: Selector,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            fb_docs: 10,
            window: 128,
            stride: 64,
            num_passages: 1,
            selector: Selector::TopP,
        }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fb_docs == 0 {
            return Err(Error::Config("context fb_docs must be >= 1".into()));
        }
        if self.window < 2 {
            return Err(Error::Config("context window must be >= 2".into()));
        }
        if self.stride * 2 != self.window {
            return Err(Error::Config(format!(
                "context stride must be half the window (window {}, stride {})",
                self.window, self.stride
            )));
        }
        if !(1..=MAX_PASSAGES).contains(&self.num_passages) {
            return Err(Error::Config(format!(
                "num_passages must be in 1..={MAX_PASSAGES}, got {}",
                self.num_passages
            )));
        }
        Ok(())
    }
}

/// Cut a document into word windows starting at `0, stride, 2·stride, …`.
///
/// The last window may be short; no window starts past the point where the
/// previous one already reached the end of the document.
///
/// ```
/// use qreform::context::split_passages;
/// let doc = (0..200).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
/// let spans: Vec<_> = split_passages(&doc, 128, 64)
///     .unwrap()
///     .iter()
///     .map(|p| p.tokens.len())
///     .collect();
/// assert_eq!(spans, [128, 128, 72]);
/// ```
pub fn split_passages(doc_text: &str, window: usize, stride: usize) -> Result<Vec<Passage>> {
    split_passages_for("", doc_text, window, stride)
}

pub(crate) fn split_passages_for(
    doc_id: &str,
    doc_text: &str,
    window: usize,
    stride: usize,
) -> Result<Vec<Passage>> {
    if window < 2 || stride == 0 || stride > window {
        return Err(Error::Config(format!(
            "invalid passage geometry: window {window}, stride {stride}"
        )));
    }
    let tokens: Vec<&str> = doc_text.split_whitespace().collect();
    let mut passages = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + window).min(tokens.len());
        let slice = &tokens[start..end];
        passages.push(Passage {
            doc_id: doc_id.to_string(),
            window_index: passages.len(),
            tokens: slice.iter().map(|t| t.to_string()).collect(),
            text: slice.join(" "),
            score: 0.0,
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(passages)
}

/// A scored passage tagged with its document's rank in the feedback set.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub doc_rank: usize,
    pub passage: Passage,
}

fn by_score(a: &Candidate, b: &Candidate) -> Ordering {
    b.passage
        .score
        .total_cmp(&a.passage.score)
        .then(a.doc_rank.cmp(&b.doc_rank))
        .then(a.passage.window_index.cmp(&b.passage.window_index))
}

/// Apply a selector to already-scored passages, grouped per feedback
/// document in rank order. Returns at most `m` passages, best first.
pub fn select_scored(per_doc: &[Vec<Passage>], selector: Selector, m: usize) -> Vec<Passage> {
    let mut pool: Vec<Candidate> = match selector {
        Selector::FirstP => per_doc
            .iter()
            .enumerate()
            .filter_map(|(rank, ps)| ps.first().map(|p| Candidate { doc_rank: rank, passage: p.clone() }))
            .collect(),
        Selector::TopP => per_doc
            .iter()
            .enumerate()
            .flat_map(|(rank, ps)| ps.iter().map(move |p| Candidate { doc_rank: rank, passage: p.clone() }))
            .collect(),
        Selector::MaxP => per_doc
            .iter()
            .enumerate()
            .filter_map(|(rank, ps)| {
                ps.iter()
                    .map(|p| Candidate { doc_rank: rank, passage: p.clone() })
                    .min_by(by_score)
            })
            .collect(),
    };
    pool.sort_by(by_score);
    pool.truncate(m);
    pool.into_iter().map(|c| c.passage).collect()
}

/// Split and BM25-score the passages of the top `fb_docs` documents of
/// `ranking`, grouped per document in rank order.
pub fn feedback_passages(
    index: &Index,
    query: &WeightedQuery,
    ranking: &Ranking,
    config: &ContextConfig,
    params: &Bm25Params,
) -> Result<Vec<Vec<Passage>>> {
    let mut per_doc = Vec::new();
    for entry in ranking.top(config.fb_docs) {
        let text = index
            .doc_text(&entry.docno)
            .ok_or_else(|| Error::Usage(format!("ranked document {:?} is not in the index", entry.docno)))?;
        let mut passages = split_passages_for(&entry.docno, text, config.window, config.stride)?;
        for p in &mut passages {
            p.score = index.score_passage(query, p, config.window, config.stride, params);
        }
        per_doc.push(passages);
    }
    Ok(per_doc)
}

/// Pick the context passages for `query` from the feedback documents in
/// `ranking`, scoring passages with BM25 against the original query.
pub fn select_context(
    index: &Index,
    query: &WeightedQuery,
    ranking: &Ranking,
    config: &ContextConfig,
    params: &Bm25Params,
) -> Result<Vec<Passage>> {
    config.validate()?;
    let per_doc = feedback_passages(index, query, ranking, config, params)?;
    Ok(select_scored(&per_doc, config.selector, config.num_passages))
}
