//! Weakly supervised reformulation pairs.
//!
//! Queries that share a relevant document form the initial pool. Three
//! filters prune it:
//!
//! * overlap (`W_O`): keep pairs whose top-K retrieved sets share at least `delta_o` documents;
//! * effectiveness (`W_E`): keep pairs where the target query retrieves strictly better;
//! * stopwords (`W_S`): strip stopwords from the target and drop pairs left empty.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{metric_value, Gain, Metric, Qrels, Topics};
use crate::index::{Bm25Params, Index, WeightedQuery};
use crate::textproc::Stoplist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPair {
    pub qx_id: String,
    pub qy_id: String,
    /// Source query.
    pub qx: String,
    /// Target query.
    pub qy: String,
    pub shared_docs: Vec<String>,
    pub overlap: Option<usize>,
    pub eff_delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Depth of the retrieved sets compared by the overlap filter.
    pub overlap_k: usize,
    pub delta_o: usize,
    pub delta_e: f64,
    pub metric: Metric,
    pub gain: Gain,
    /// Retrieval depth used when measuring effectiveness.
    pub depth: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            overlap_k: 10,
            delta_o: 5,
            delta_e: 0.0,
            metric: Metric::Dcg(10),
            gain: Gain::Linear,
            depth: 1000,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_o > self.overlap_k {
            return Err(Error::Config(format!(
                "delta_o ({}) cannot exceed overlap_k ({})",
                self.delta_o, self.overlap_k
            )));
        }
        if !self.delta_e.is_finite() {
            return Err(Error::Config("delta_e must be finite".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("filter depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Every ordered pair of distinct queries sharing at least one relevant
/// document, in topic-file order. Both orientations are emitted.
///
/// Pairs whose two texts are identical carry no reformulation and are left out.
pub fn build_initial_pool(qrels: &Qrels, topics: &Topics) -> Result<Vec<QueryPair>> {
    let position: HashMap<&str, usize> = topics.iter().enumerate().map(|(i, (q, _))| (q, i)).collect();
    let mut unknown: Vec<&str> = qrels.query_ids().filter(|q| !position.contains_key(q)).collect();
    if !unknown.is_empty() {
        unknown.sort_unstable();
        return Err(Error::Ingest(format!("qrels reference unknown query ids: {}", unknown.join(", "))));
    }
    let mut by_doc: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for q in qrels.query_ids() {
        for d in qrels.relevant(q) {
            by_doc.entry(d).or_default().insert(position[q]);
        }
    }
    let mut shared: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    for (doc, queries) in &by_doc {
        for &a in queries {
            for &b in queries {
                if a != b {
                    shared.entry((a, b)).or_default().push(doc.to_string());
                }
            }
        }
    }
    let entries: Vec<(&str, &str)> = topics.iter().collect();
    Ok(shared
        .into_iter()
        .filter(|((a, b), _)| entries[*a].1 != entries[*b].1)
        .map(|((a, b), docs)| QueryPair {
            qx_id: entries[a].0.to_string(),
            qy_id: entries[b].0.to_string(),
            qx: entries[a].1.to_string(),
            qy: entries[b].1.to_string(),
            shared_docs: docs,
            overlap: None,
            eff_delta: None,
        })
        .collect())
}

/// Top-`k` docnos for each distinct query text in `texts`.
fn rankings<'a>(
    index: &Index,
    params: &Bm25Params,
    texts: impl Iterator<Item = &'a str>,
    k: usize,
) -> HashMap<&'a str, Vec<String>> {
    let unique: BTreeSet<&str> = texts.collect();
    unique
        .into_par_iter()
        .map(|text| {
            let q = WeightedQuery::from_text(text, index.analysis());
            let docs = index.search(&q, k, params).docnos().map(str::to_string).collect();
            (text, docs)
        })
        .collect()
}

/// `W_O`: keep pairs with `|R_K(qx) ∩ R_K(qy)| ≥ delta_o`, recording the overlap.
pub fn filter_overlap(pairs: &[QueryPair], index: &Index, params: &Bm25Params, config: &FilterConfig) -> Vec<QueryPair> {
    let ranked = rankings(index, params, pairs.iter().flat_map(|p| [p.qx.as_str(), p.qy.as_str()]), config.overlap_k);
    pairs
        .iter()
        .filter_map(|p| {
            let x: HashSet<&String> = ranked[p.qx.as_str()].iter().collect();
            let o = ranked[p.qy.as_str()].iter().filter(|d| x.contains(d)).count();
            (o >= config.delta_o).then(|| QueryPair { overlap: Some(o), ..p.clone() })
        })
        .collect()
}

/// `W_E`: keep pairs where `M(qy) − M(qx) > delta_e`, recording the delta.
///
/// Pairs with a query that has no judgments at all are dropped with a warning.
pub fn filter_effectiveness(
    pairs: &[QueryPair],
    index: &Index,
    qrels: &Qrels,
    params: &Bm25Params,
    config: &FilterConfig,
) -> Vec<QueryPair> {
    let depth = match config.metric {
        Metric::Dcg(k) | Metric::Ndcg(k) | Metric::Recall(k) => k.min(config.depth),
        Metric::Map | Metric::Mrr => config.depth,
    };
    let ranked = rankings(index, params, pairs.iter().flat_map(|p| [p.qx.as_str(), p.qy.as_str()]), depth);
    let measure = |qid: &str, text: &str| -> Option<f64> {
        let j = qrels.judgments(qid)?;
        let docs: Vec<&str> = ranked[text].iter().map(String::as_str).collect();
        Some(metric_value(&docs, j, config.metric, config.gain))
    };
    let mut warned = HashSet::new();
    pairs
        .iter()
        .filter_map(|p| {
            let (Some(mx), Some(my)) = (measure(&p.qx_id, &p.qx), measure(&p.qy_id, &p.qy)) else {
                let missing = if qrels.judgments(&p.qx_id).is_none() { &p.qx_id } else { &p.qy_id };
                if warned.insert(missing.clone()) {
                    log::warn!("query {missing} has no relevance judgments; dropping its pairs");
                }
                return None;
            };
            let delta = my - mx;
            (delta > config.delta_e).then(|| QueryPair { eff_delta: Some(delta), ..p.clone() })
        })
        .collect()
}

fn bare(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Remove stopwords from a query: whitespace tokens are compared after
/// lowercasing and trimming surrounding punctuation; tokens that are pure
/// punctuation go too.
///
/// ```
/// use qreform::textproc::default_stoplist;
/// use qreform::weak::strip_stopwords;
/// assert_eq!(strip_stopwords("what is the bm25 ranking function", &default_stoplist()), "bm25 ranking function");
/// ```
pub fn strip_stopwords(text: &str, stoplist: &Stoplist) -> String {
    text.split_whitespace()
        .filter(|t| {
            let b = bare(t);
            !b.is_empty() && !stoplist.contains(&b)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// True when some whitespace token of `text` is a stoplist word.
pub fn has_stopword(text: &str, stoplist: &Stoplist) -> bool {
    text.split_whitespace().any(|t| stoplist.contains(&bare(t)))
}

/// `W_S`: strip stopwords from each target query; drop pairs left empty.
pub fn filter_stopwords(pairs: &[QueryPair], stoplist: &Stoplist) -> Vec<QueryPair> {
    pairs
        .iter()
        .filter_map(|p| {
            let qy = strip_stopwords(&p.qy, stoplist);
            (!qy.is_empty()).then(|| QueryPair { qy, ..p.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Filter {
    Overlap,
    Effectiveness,
    Stopwords,
}

impl Filter {
    pub fn label(self) -> &'static str {
        match self {
            Filter::Overlap => "O",
            Filter::Effectiveness => "E",
            Filter::Stopwords => "S",
        }
    }
}

/// A left-to-right filter sequence written `O`, `E+S`, `none`, ….
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterChain(pub Vec<Filter>);

impl FilterChain {
    /// `W_(E+S)`, the combination carried forward for training.
    pub fn recommended() -> Self {
        FilterChain(vec![Filter::Effectiveness, Filter::Stopwords])
    }
}

impl FromStr for FilterChain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(FilterChain::default());
        }
        s.split('+')
            .map(|part| match part.trim().to_ascii_uppercase().as_str() {
                "O" => Ok(Filter::Overlap),
                "E" => Ok(Filter::Effectiveness),
                "S" => Ok(Filter::Stopwords),
                other => Err(Error::Config(format!("unknown filter {other:?} (O, E, S)"))),
            })
            .collect::<Result<_>>()
            .map(FilterChain)
    }
}

impl fmt::Display for FilterChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let labels: Vec<_> = self.0.iter().map(|x| x.label()).collect();
        f.write_str(&labels.join("+"))
    }
}

/// Everything the filters read.
pub struct FilterContext<'a> {
    pub index: &'a Index,
    pub qrels: &'a Qrels,
    pub params: Bm25Params,
    pub stoplist: Stoplist,
    pub config: FilterConfig,
}

impl FilterContext<'_> {
    pub fn apply(&self, filter: Filter, pairs: &[QueryPair]) -> Vec<QueryPair> {
        match filter {
            Filter::Overlap => filter_overlap(pairs, self.index, &self.params, &self.config),
            Filter::Effectiveness => filter_effectiveness(pairs, self.index, self.qrels, &self.params, &self.config),
            Filter::Stopwords => filter_stopwords(pairs, &self.stoplist),
        }
    }
}

/// Pool size and mean whitespace-token lengths after one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub pool_size: usize,
    pub avg_len_qx: f64,
    pub avg_len_qy: f64,
}

impl StageReport {
    pub fn of(stage: impl Into<String>, pairs: &[QueryPair]) -> Self {
        let mean = |f: fn(&QueryPair) -> &str| {
            if pairs.is_empty() {
                0.0
            } else {
                pairs.iter().map(|p| f(p).split_whitespace().count()).sum::<usize>() as f64 / pairs.len() as f64
            }
        };
        StageReport {
            stage: stage.into(),
            pool_size: pairs.len(),
            avg_len_qx: mean(|p| &p.qx),
            avg_len_qy: mean(|p| &p.qy),
        }
    }
}

/// Apply `chain` left to right.
pub fn compose_filters(pairs: &[QueryPair], chain: &FilterChain, ctx: &FilterContext<'_>) -> Vec<QueryPair> {
    run_filters(pairs, chain, ctx).0
}

/// Like [`compose_filters`], also reporting each stage. The first report is
/// the input pool, labelled `initial`; later labels are cumulative (`E`, `E+S`).
pub fn run_filters(
    pairs: &[QueryPair],
    chain: &FilterChain,
    ctx: &FilterContext<'_>,
) -> (Vec<QueryPair>, Vec<StageReport>) {
    let mut current = pairs.to_vec();
    let mut reports = vec![StageReport::of("initial", &current)];
    for (i, &f) in chain.0.iter().enumerate() {
        current = ctx.apply(f, &current);
        reports.push(StageReport::of(FilterChain(chain.0[..=i].to_vec()).to_string(), &current));
    }
    (current, reports)
}

fn clean(field: &str) -> String {
    field.split(['\t', '\n', '\r']).collect::<Vec<_>>().join(" ")
}

/// Two tab-separated columns `qx<TAB>qy`, no header.
pub fn pairs_to_tsv(pairs: &[QueryPair]) -> String {
    pairs.iter().map(|p| format!("{}\t{}\n", clean(&p.qx), clean(&p.qy))).collect()
}

/// Read a pair file back as `(qx, qy)` texts.
pub fn parse_pairs_tsv(contents: &str) -> Result<Vec<(String, String)>> {
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            match cols[..] {
                [x, y] if !x.trim().is_empty() && !y.trim().is_empty() => Ok((x.to_string(), y.to_string())),
                _ => Err(Error::Ingest(format!("pair file line {}: expected two non-empty columns", i + 1))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{default_stoplist, AnalysisConfig};

    fn topics(entries: &[(&str, &str)]) -> Topics {
        Topics::new(entries.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()).unwrap()
    }

    #[test]
    fn pool_from_shared_relevance() {
        let qrels = Qrels::parse("q1 0 d7 1\nq2 0 d7 2\nq3 0 d9 1\nq3 0 d7 0\n").unwrap();
        let t = topics(&[("q1", "one"), ("q2", "two"), ("q3", "three")]);
        let pool = build_initial_pool(&qrels, &t).unwrap();
        let ids: Vec<_> = pool.iter().map(|p| (p.qx_id.as_str(), p.qy_id.as_str())).collect();
        assert_eq!(ids, [("q1", "q2"), ("q2", "q1")]);
        assert_eq!(pool[0].shared_docs, ["d7"]);
    }

    #[test]
    fn pool_errors_and_empties() {
        let t = topics(&[("q1", "one")]);
        assert!(build_initial_pool(&Qrels::parse("q9 0 d1 1\n").unwrap(), &t).is_err());
        assert!(build_initial_pool(&Qrels::parse("q1 0 d1 1\n").unwrap(), &t).unwrap().is_empty());
    }

    #[test]
    fn stopword_filter() {
        let stop = default_stoplist();
        let pair = |qy: &str| QueryPair {
            qx_id: "a".into(),
            qy_id: "b".into(),
            qx: "what is bm25".into(),
            qy: qy.into(),
            shared_docs: vec!["d".into()],
            overlap: None,
            eff_delta: None,
        };
        let out = filter_stopwords(&[pair("what is the bm25 ranking function"), pair("what is the")], &stop);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].qy, "bm25 ranking function");
        assert_eq!(out[0].qx, "what is bm25");
        assert_eq!(filter_stopwords(&out, &stop), out);
        assert_eq!(strip_stopwords("The BM25? ranking!", &stop), "BM25? ranking!");
    }

    #[test]
    fn overlap_of_identical_queries_is_result_count() {
        let idx = Index::build([("d1", "cat dog"), ("d2", "cat"), ("d3", "fish")], AnalysisConfig::raw()).unwrap();
        let p = QueryPair {
            qx_id: "1".into(),
            qy_id: "2".into(),
            qx: "cat".into(),
            qy: "cat".into(),
            shared_docs: vec![],
            overlap: None,
            eff_delta: None,
        };
        let out = filter_overlap(&[p], &idx, &Bm25Params::default(), &FilterConfig { delta_o: 2, ..Default::default() });
        assert_eq!(out[0].overlap, Some(2));
    }

    #[test]
    fn chain_syntax() {
        assert_eq!("E+S".parse::<FilterChain>().unwrap(), FilterChain::recommended());
        assert_eq!("none".parse::<FilterChain>().unwrap().0, []);
        assert_eq!(FilterChain::recommended().to_string(), "E+S");
        assert!("X".parse::<FilterChain>().is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let p = QueryPair {
            qx_id: "1".into(),
            qy_id: "2".into(),
            qx: "a\tb".into(),
            qy: "c".into(),
            shared_docs: vec![],
            overlap: None,
            eff_delta: None,
        };
        let text = pairs_to_tsv(&[p]);
        assert_eq!(text, "a b\tc\n");
        assert_eq!(parse_pairs_tsv(&text).unwrap(), [("a b".to_string(), "c".to_string())]);
        assert!(parse_pairs_tsv("only one column\n").is_err());
    }

    #[test]
    fn config_invariant() {
        assert!(FilterConfig { delta_o: 11, ..Default::default() }.validate().is_err());
        assert!(FilterConfig::default().validate().is_ok());
    }
}
