//! Classical pseudo-relevance feedback: RM3 and the divergence-from-randomness
//! Bo1 and KL expansion models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{DocId, Index, Ranking, WeightedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrfConfig {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Weight of the original query in RM3's interpolation.
    pub rm3_lambda: f64,
}

impl Default for PrfConfig {
    fn default() -> Self {
        PrfConfig {
            fb_docs: 10,
            fb_terms: 10,
            rm3_lambda: 0.5,
        }
    }
}

impl PrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fb_docs == 0 {
            return Err(Error::Config("prf fb_docs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rm3_lambda) {
            return Err(Error::Config(format!("rm3_lambda must be in [0, 1], got {}", self.rm3_lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DfrModel {
    Bo1,
    Kl,
}

/// An expanded query, plus whether feedback actually contributed.
///
/// `feedback_used` is false when the ranking was empty; the query is then
/// the normalized original.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub query: WeightedQuery,
    pub feedback_used: bool,
}

fn feedback_docs(index: &Index, ranking: &Ranking, fb_docs: usize) -> Result<Vec<(DocId, f64)>> {
    ranking
        .top(fb_docs)
        .iter()
        .map(|e| {
            index
                .doc_id(&e.docno)
                .map(|d| (d, e.score))
                .ok_or_else(|| Error::Usage(format!("ranked document {:?} is not in the index", e.docno)))
        })
        .collect()
}

/// Best `n` entries by descending score, ties by term.
fn top_terms(scores: BTreeMap<&str, f64>, n: usize) -> Vec<(&str, f64)> {
    let mut v: Vec<_> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    v.truncate(n);
    v
}

/// The RM1 relevance model over the feedback documents:
/// `P(t) ∝ Σ_d P(t|d) · score(d) / Σ score`, with maximum-likelihood `P(t|d)`.
///
/// Documents are weighted uniformly when the scores do not sum to a positive
/// value.
pub fn relevance_model<'a>(index: &'a Index, docs: &[(DocId, f64)]) -> BTreeMap<&'a str, f64> {
    let total: f64 = docs.iter().map(|&(_, s)| s).sum();
    let uniform = !(total > 0.0);
    let mut model = BTreeMap::new();
    for &(doc, score) in docs {
        let len = index.doc_length(doc) as f64;
        if len == 0.0 {
            continue;
        }
        let dw = if uniform { 1.0 / docs.len() as f64 } else { score / total };
        for (term, tf) in index.doc_terms(doc) {
            *model.entry(term).or_insert(0.0) += tf as f64 / len * dw;
        }
    }
    model
}

/// RM3: `λ · P(t|q) + (1 − λ) · P_RM1(t)`, where RM1 is truncated to its
/// `fb_terms` most probable terms and renormalized. The result sums to 1.
pub fn expand_rm3(index: &Index, query: &WeightedQuery, ranking: &Ranking, config: &PrfConfig) -> Result<Expansion> {
    config.validate()?;
    let original = query.normalized();
    if ranking.is_empty() {
        return Ok(Expansion {
            query: original,
            feedback_used: false,
        });
    }
    if config.fb_terms == 0 || config.rm3_lambda == 1.0 {
        return Ok(Expansion {
            query: original,
            feedback_used: true,
        });
    }
    let docs = feedback_docs(index, ranking, config.fb_docs)?;
    let top = top_terms(relevance_model(index, &docs), config.fb_terms);
    let mass: f64 = top.iter().map(|&(_, p)| p).sum();
    if mass == 0.0 {
        return Ok(Expansion {
            query: original,
            feedback_used: true,
        });
    }
    let lambda = config.rm3_lambda;
    let mut expanded = WeightedQuery::new(query.source_text());
    expanded.add_scaled(&original, lambda);
    for (term, p) in top {
        expanded.add(term, (1.0 - lambda) * p / mass);
    }
    if original.is_empty() {
        // No original distribution to interpolate with; keep the output a distribution.
        expanded = expanded.normalized();
    }
    Ok(Expansion {
        query: expanded,
        feedback_used: true,
    })
}

/// Information content of each feedback term under a DFR model.
///
/// * Bo1: `tf_x · log2((1 + Pn) / Pn) + log2(1 + Pn)`, `Pn = F_t / N`
/// * KL: `Px · log2(Px / Pc)`, `Px = tf_x / len_x`, `Pc = F_t / tokens`
///
/// `tf_x` and `len_x` are the term's frequency in, and the total length of,
/// the feedback documents; `F_t` is the collection frequency.
pub fn dfr_scores<'a>(index: &'a Index, docs: &[(DocId, f64)], model: DfrModel) -> BTreeMap<&'a str, f64> {
    let mut tf_x: BTreeMap<&str, f64> = BTreeMap::new();
    let mut len_x = 0.0;
    for &(doc, _) in docs {
        len_x += index.doc_length(doc) as f64;
        for (term, tf) in index.doc_terms(doc) {
            *tf_x.entry(term).or_insert(0.0) += tf as f64;
        }
    }
    let n = index.doc_count() as f64;
    let tokens = index.total_tokens() as f64;
    tf_x.into_iter()
        .map(|(term, tf)| {
            let f = index.collection_frequency(term) as f64;
            let w = match model {
                DfrModel::Bo1 => {
                    let pn = f / n;
                    tf * ((1.0 + pn) / pn).log2() + (1.0 + pn).log2()
                }
                DfrModel::Kl => {
                    let px = tf / len_x;
                    let pc = f / tokens;
                    px * (px / pc).log2()
                }
            };
            (term, w)
        })
        .collect()
}

/// DFR expansion: the max-normalized original query plus the `fb_terms`
/// best-scoring feedback terms, each weighted by its score over the best score.
pub fn expand_dfr(
    index: &Index,
    query: &WeightedQuery,
    ranking: &Ranking,
    model: DfrModel,
    config: &PrfConfig,
) -> Result<Expansion> {
    config.validate()?;
    let mut expanded = query.max_normalized();
    if ranking.is_empty() {
        return Ok(Expansion {
            query: expanded,
            feedback_used: false,
        });
    }
    let docs = feedback_docs(index, ranking, config.fb_docs)?;
    let top = top_terms(dfr_scores(index, &docs, model), config.fb_terms);
    if let Some(&(_, best)) = top.first() {
        for (term, w) in top {
            expanded.add(term, w / best);
        }
    }
    Ok(Expansion {
        query: expanded,
        feedback_used: true,
    })
}
