//! Inverted index, BM25 retrieval over weighted queries, passage scoring and
//! MaxPassage re-ranking.

mod corpus;
mod persist;
mod query;
mod rerank;

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::context::{split_passages, Passage};
use crate::error::{Error, Result};
use crate::textproc::{analyze, AnalysisConfig};

pub use corpus::{parse_corpus, read_corpus};
pub use persist::FORMAT_VERSION;
pub use query::WeightedQuery;
pub use rerank::rerank_maxpassage;

/// Dense document number assigned in ingestion order.
pub type DocId = u32;
pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: DocId,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let params = Bm25Params { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(Error::Config(format!("bm25 k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("bm25 b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }

    /// The saturating term-frequency component.
    #[inline]
    pub fn tf_component(&self, tf: f64, length: f64, avg_length: f64) -> f64 {
        let norm = self.k1 * (1.0 - self.b + self.b * length / avg_length);
        tf * (self.k1 + 1.0) / (tf + norm)
    }
}

/// `ln((N - n + 0.5) / (n + 0.5) + 1)`, never negative.
#[inline]
pub fn idf(doc_count: f64, doc_freq: f64) -> f64 {
    ((doc_count - doc_freq + 0.5) / (doc_freq + 0.5) + 1.0).ln().max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub docno: String,
    pub score: f64,
}

/// The ranked documents for one query, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<RankedDoc>,
}

impl Ranking {
    /// Sorts the entries into canonical order: score descending, then docno ascending.
    pub fn new(query_id: impl Into<String>, mut entries: Vec<RankedDoc>) -> Self {
        sort_entries(&mut entries);
        Ranking {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn with_query_id(mut self, query_id: impl Into<String>) -> Self {
        self.query_id = query_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `k` entries.
    pub fn top(&self, k: usize) -> &[RankedDoc] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn docnos(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.docno.as_str())
    }
}

pub(crate) fn sort_entries(entries: &mut [RankedDoc]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.docno.cmp(&b.docno)));
}

/// An immutable in-memory inverted index.
///
/// Documents keep their raw text so passages can be cut from them later.
#[derive(Debug)]
pub struct Index {
    analysis: AnalysisConfig,
    docnos: Vec<String>,
    doc_lookup: HashMap<String, DocId>,
    texts: Vec<String>,
    doc_lengths: Vec<u32>,
    terms: Vec<String>,
    vocab: HashMap<String, TermId>,
    postings: Vec<Vec<Posting>>,
    collection_freq: Vec<u64>,
    /// Per document, (term, tf) sorted by term id.
    forward: Vec<Vec<(TermId, u32)>>,
    total_tokens: u64,
    avg_doc_length: f64,
    passage_length_cache: RwLock<HashMap<(usize, usize), f64>>,
}

impl Index {
    /// Build an index from `(docno, text)` records.
    pub fn build<I, S, T>(corpus: I, analysis: AnalysisConfig) -> Result<Index>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut builder = IndexBuilder::new(analysis);
        for (docno, text) in corpus {
            builder.add(docno.into(), text.into())?;
        }
        builder.finish()
    }

    pub fn analysis(&self) -> &AnalysisConfig {
        &self.analysis
    }

    pub fn doc_count(&self) -> usize {
        self.docnos.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_id(&self, docno: &str) -> Option<DocId> {
        self.doc_lookup.get(docno).copied()
    }

    pub fn docno(&self, doc: DocId) -> &str {
        &self.docnos[doc as usize]
    }

    pub fn doc_length(&self, doc: DocId) -> u32 {
        self.doc_lengths[doc as usize]
    }

    pub fn text(&self, doc: DocId) -> &str {
        &self.texts[doc as usize]
    }

    pub fn doc_text(&self, docno: &str) -> Option<&str> {
        self.doc_id(docno).map(|d| self.text(d))
    }

    pub fn term_id(&self, term: &str) -> Option<TermId> {
        self.vocab.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_id(term)
            .map(|t| self.postings[t as usize].as_slice())
            .unwrap_or(&[])
    }

    /// Number of documents containing `term`.
    pub fn document_frequency(&self, term: &str) -> u64 {
        self.postings(term).len() as u64
    }

    /// Total occurrences of `term` across the collection.
    pub fn collection_frequency(&self, term: &str) -> u64 {
        self.term_id(term)
            .map(|t| self.collection_freq[t as usize])
            .unwrap_or(0)
    }

    /// `(term, tf)` pairs of one document, in term-id order.
    pub fn doc_terms(&self, doc: DocId) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.forward[doc as usize]
            .iter()
            .map(move |&(t, tf)| (self.terms[t as usize].as_str(), tf))
    }

    pub fn term_frequency(&self, doc: DocId, term: &str) -> u32 {
        let Some(t) = self.term_id(term) else { return 0 };
        let row = &self.forward[doc as usize];
        row.binary_search_by_key(&t, |&(id, _)| id)
            .map(|i| row[i].1)
            .unwrap_or(0)
    }

    /// Top-`k` documents by `Σ_t w(t) · BM25(t, d)`. Zero-score documents are
    /// never returned, so a query with no indexed terms yields an empty ranking.
    pub fn search(&self, query: &WeightedQuery, k: usize, params: &Bm25Params) -> Ranking {
        if k == 0 {
            return Ranking::default();
        }
        let n = self.doc_count() as f64;
        let mut acc = vec![0.0f64; self.doc_count()];
        let mut touched: Vec<DocId> = Vec::new();
        for (term, weight) in query.iter() {
            let Some(t) = self.term_id(term) else { continue };
            let list = &self.postings[t as usize];
            let term_idf = idf(n, list.len() as f64);
            if term_idf == 0.0 {
                continue;
            }
            for p in list {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                let len = self.doc_lengths[p.doc as usize] as f64;
                *slot += weight * term_idf * params.tf_component(p.tf as f64, len, self.avg_doc_length);
            }
        }
        let mut hits: Vec<(DocId, f64)> = touched
            .into_iter()
            .map(|d| (d, acc[d as usize]))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        let by_rank = |a: &(DocId, f64), b: &(DocId, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docnos[a.0 as usize].cmp(&self.docnos[b.0 as usize]))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, by_rank);
            hits.truncate(k);
        }
        hits.sort_by(by_rank);
        Ranking {
            query_id: String::new(),
            entries: hits
                .into_iter()
                .map(|(d, score)| RankedDoc {
                    docno: self.docnos[d as usize].clone(),
                    score,
                })
                .collect(),
        }
    }

    /// BM25 of a passage treated as a document: collection document
    /// frequencies, the passage's own analyzed length, and the corpus-wide
    /// average analyzed passage length for the same window geometry.
    pub fn score_passage(
        &self,
        query: &WeightedQuery,
        passage: &Passage,
        window: usize,
        stride: usize,
        params: &Bm25Params,
    ) -> f64 {
        let terms = analyze(&passage.text, &self.analysis);
        if terms.is_empty() {
            return 0.0;
        }
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &terms {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        let avg = self.avg_passage_length(window, stride);
        let len = terms.len() as f64;
        let n = self.doc_count() as f64;
        let mut score = 0.0;
        for (term, weight) in query.iter() {
            let Some(&f) = tf.get(term) else { continue };
            let df = self.document_frequency(term) as f64;
            score += weight * idf(n, df) * params.tf_component(f as f64, len, avg);
        }
        score
    }

    /// Mean analyzed length over every passage of every document, cached per
    /// `(window, stride)`. Falls back to 1.0 for a corpus with no passages.
    pub fn avg_passage_length(&self, window: usize, stride: usize) -> f64 {
        if let Some(&avg) = self
            .passage_length_cache
            .read()
            .expect("cache lock")
            .get(&(window, stride))
        {
            return avg;
        }
        let (mut total, mut count) = (0u64, 0u64);
        for text in &self.texts {
            // Window geometry was validated by the caller; a bad one yields no passages.
            for p in split_passages(text, window, stride).unwrap_or_default() {
                total += analyze(&p.text, &self.analysis).len() as u64;
                count += 1;
            }
        }
        let avg = if count == 0 || total == 0 {
            1.0
        } else {
            total as f64 / count as f64
        };
        self.passage_length_cache
            .write()
            .expect("cache lock")
            .insert((window, stride), avg);
        avg
    }
}

/// Single-writer index construction.
pub struct IndexBuilder {
    analysis: AnalysisConfig,
    docnos: Vec<String>,
    doc_lookup: HashMap<String, DocId>,
    texts: Vec<String>,
    doc_lengths: Vec<u32>,
    terms: Vec<String>,
    vocab: HashMap<String, TermId>,
    postings: Vec<Vec<Posting>>,
}

impl IndexBuilder {
    pub fn new(analysis: AnalysisConfig) -> Self {
        IndexBuilder {
            analysis,
            docnos: Vec::new(),
            doc_lookup: HashMap::new(),
            texts: Vec::new(),
            doc_lengths: Vec::new(),
            terms: Vec::new(),
            vocab: HashMap::new(),
            postings: Vec::new(),
        }
    }

    pub fn add(&mut self, docno: String, text: String) -> Result<DocId> {
        if self.doc_lookup.contains_key(&docno) {
            return Err(Error::Ingest(format!("duplicate document id {docno:?}")));
        }
        let doc = DocId::try_from(self.docnos.len())
            .map_err(|_| Error::Ingest("too many documents".into()))?;
        let mut counts: HashMap<TermId, u32> = HashMap::new();
        let mut length = 0u32;
        for term in analyze(&text, &self.analysis) {
            length += 1;
            let next = self.terms.len() as TermId;
            let id = *self.vocab.entry(term.as_str().to_string()).or_insert_with(|| {
                self.terms.push(term.as_str().to_string());
                self.postings.push(Vec::new());
                next
            });
            *counts.entry(id).or_default() += 1;
        }
        for (term, tf) in counts {
            self.postings[term as usize].push(Posting { doc, tf });
        }
        self.doc_lookup.insert(docno.clone(), doc);
        self.docnos.push(docno);
        self.texts.push(text);
        self.doc_lengths.push(length);
        Ok(doc)
    }

    pub fn finish(self) -> Result<Index> {
        if self.docnos.is_empty() {
            return Err(Error::Ingest("corpus is empty".into()));
        }
        Ok(Index::from_parts(
            self.analysis,
            self.docnos,
            self.texts,
            self.doc_lengths,
            self.terms,
            self.postings,
        ))
    }
}

impl Index {
    /// Assemble an index from its persisted parts, deriving lookups,
    /// collection statistics and the forward index.
    fn from_parts(
        analysis: AnalysisConfig,
        docnos: Vec<String>,
        texts: Vec<String>,
        doc_lengths: Vec<u32>,
        terms: Vec<String>,
        mut postings: Vec<Vec<Posting>>,
    ) -> Index {
        let mut forward: Vec<Vec<(TermId, u32)>> = vec![Vec::new(); docnos.len()];
        let mut collection_freq = Vec::with_capacity(terms.len());
        for (t, list) in postings.iter_mut().enumerate() {
            list.sort_by_key(|p| p.doc);
            let mut cf = 0u64;
            for p in list.iter() {
                forward[p.doc as usize].push((t as TermId, p.tf));
                cf += p.tf as u64;
            }
            collection_freq.push(cf);
        }
        let total_tokens: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total_tokens as f64 / docnos.len() as f64;
        let doc_lookup = docnos
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as DocId))
            .collect();
        let vocab = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TermId))
            .collect();
        Index {
            analysis,
            docnos,
            doc_lookup,
            texts,
            doc_lengths,
            terms,
            vocab,
            postings,
            collection_freq,
            forward,
            total_tokens,
            avg_doc_length,
            passage_length_cache: RwLock::new(HashMap::new()),
        }
    }
}
