//! Rank-quality metrics, per-run reports and significance testing.
//!
//! Binary metrics treat a document as relevant when its grade is above 0.

mod stats;
mod trec;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::index::Ranking;

pub use stats::{holm_bonferroni, paired_t_test};
pub use trec::{validate_run, Qrels, Run, RunSummary, Topics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Map,
    Mrr,
    Ndcg(usize),
    Dcg(usize),
    Recall(usize),
}

impl Metric {
    /// MAP, MRR, nDCG@10, nDCG@20 and Recall@1000.
    pub const STANDARD: [Metric; 5] = [Metric::Map, Metric::Mrr, Metric::Ndcg(10), Metric::Ndcg(20), Metric::Recall(1000)];

    /// DCG is unbounded; everything else lies in [0, 1].
    pub fn is_bounded(self) -> bool {
        !matches!(self, Metric::Dcg(_))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Map => f.write_str("map"),
            Metric::Mrr => f.write_str("mrr"),
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Dcg(k) => write!(f, "dcg@{k}"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let depth = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::Config(format!("bad metric depth in {s:?}")))
        };
        match lower.split_once('@') {
            None if lower == "map" => Ok(Metric::Map),
            None if lower == "mrr" || lower == "recip_rank" => Ok(Metric::Mrr),
            Some(("ndcg", k)) => Ok(Metric::Ndcg(depth(k)?)),
            Some(("dcg", k)) => Ok(Metric::Dcg(depth(k)?)),
            Some(("recall", k)) => Ok(Metric::Recall(depth(k)?)),
            _ => Err(Error::Config(format!(
                "unknown metric {s:?} (map, mrr, ndcg@k, dcg@k, recall@k)"
            ))),
        }
    }
}

impl serde::Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `rel_i`
    #[default]
    Linear,
    /// `2^rel_i − 1`
    Exponential,
}

impl Gain {
    fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => (grade as f64).exp2() - 1.0,
        }
    }
}

/// Graded judgments of one query.
pub type Judgments = BTreeMap<String, u32>;

fn grade(j: &Judgments, docno: &str) -> u32 {
    j.get(docno).copied().unwrap_or(0)
}

fn num_relevant(j: &Judgments) -> usize {
    j.values().filter(|&&g| g > 0).count()
}

/// Mean over relevant documents of precision at their rank; relevant
/// documents that were not retrieved contribute 0.
pub fn average_precision(ranking: &[&str], j: &Judgments) -> f64 {
    let total = num_relevant(j);
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if grade(j, d) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

/// `1 / rank` of the first relevant document, 0 if none is retrieved.
pub fn reciprocal_rank(ranking: &[&str], j: &Judgments) -> f64 {
    ranking
        .iter()
        .position(|d| grade(j, d) > 0)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// `Σ_{i ≤ k} gain(rel_i) / log2(i + 1)`
///
/// ```
/// use qreform::eval::{dcg, Gain, Judgments};
/// let j: Judgments = [("d1".to_string(), 1), ("d3".to_string(), 1)].into();
/// assert_eq!(dcg(&["d1", "d2", "d3"], &j, 3, Gain::Linear), 1.5);
/// ```
pub fn dcg(ranking: &[&str], j: &Judgments, k: usize, gain: Gain) -> f64 {
    ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.of(grade(j, d)) / ((i + 2) as f64).log2())
        .sum()
}

/// DCG of the best possible ordering of the judged documents.
pub fn ideal_dcg(j: &Judgments, k: usize, gain: Gain) -> f64 {
    let mut grades: Vec<u32> = j.values().copied().filter(|&g| g > 0).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.of(g) / ((i + 2) as f64).log2())
        .sum()
}

pub fn ndcg(ranking: &[&str], j: &Judgments, k: usize, gain: Gain) -> f64 {
    let ideal = ideal_dcg(j, k, gain);
    if ideal == 0.0 {
        return 0.0;
    }
    dcg(ranking, j, k, gain) / ideal
}

/// Fraction of the relevant documents found in the top `k`.
pub fn recall(ranking: &[&str], j: &Judgments, k: usize) -> f64 {
    let total = num_relevant(j);
    if total == 0 {
        return 0.0;
    }
    let found = ranking.iter().take(k).filter(|d| grade(j, d) > 0).count();
    found as f64 / total as f64
}

/// Value of `which` for one ranking, or `None` when the query is not judged
/// or has no relevant documents.
pub fn metric(ranking: &Ranking, qrels: &Qrels, which: Metric, gain: Gain) -> Option<f64> {
    let j = qrels.judgments(&ranking.query_id)?;
    if num_relevant(j) == 0 {
        return None;
    }
    let docs: Vec<&str> = ranking.docnos().collect();
    Some(metric_value(&docs, j, which, gain))
}

pub fn metric_value(docs: &[&str], j: &Judgments, which: Metric, gain: Gain) -> f64 {
    match which {
        Metric::Map => average_precision(docs, j),
        Metric::Mrr => reciprocal_rank(docs, j),
        Metric::Ndcg(k) => ndcg(docs, j, k, gain),
        Metric::Dcg(k) => dcg(docs, j, k, gain),
        Metric::Recall(k) => recall(docs, j, k),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub gain: Gain,
    /// Score judged queries missing from the run as 0 instead of skipping them.
    pub all_queries: bool,
}

/// Per-query values and their mean for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

/// Every metric of one run, plus the queries that could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub tag: String,
    pub metrics: Vec<MetricReport>,
    /// Run queries without judgments or without any relevant document.
    pub skipped: Vec<String>,
}

impl RunReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.get(metric).map(|m| m.mean)
    }
}

/// Evaluate every query of `run` that has at least one relevant document.
///
/// The mean of a metric with no evaluated queries is 0.
pub fn evaluate(run: &Run, qrels: &Qrels, metrics: &[Metric], options: EvalOptions) -> RunReport {
    let empty = Ranking::default();
    let mut qids: Vec<&str> = Vec::new();
    let mut skipped = Vec::new();
    for r in &run.rankings {
        match qrels.judgments(&r.query_id) {
            Some(j) if num_relevant(j) > 0 => qids.push(&r.query_id),
            _ => skipped.push(r.query_id.clone()),
        }
    }
    if options.all_queries {
        for q in qrels.query_ids() {
            if run.get(q).is_none() && qrels.num_relevant(q) > 0 {
                qids.push(q);
            }
        }
    }
    let metrics = metrics
        .iter()
        .map(|&m| {
            let per_query: BTreeMap<String, f64> = qids
                .iter()
                .map(|&q| {
                    let r = run.get(q).unwrap_or(&empty);
                    let docs: Vec<&str> = r.docnos().collect();
                    let j = qrels.judgments(q).expect("evaluated queries are judged");
                    (q.to_string(), metric_value(&docs, j, m, options.gain))
                })
                .collect();
            let mean = if per_query.is_empty() {
                0.0
            } else {
                per_query.values().sum::<f64>() / per_query.len() as f64
            };
            MetricReport { metric: m, per_query, mean }
        })
        .collect();
    RunReport {
        tag: run.tag.clone(),
        metrics,
        skipped,
    }
}

/// One metric of a run compared against the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub metric: Metric,
    pub delta: f64,
    pub p_value: f64,
    /// Holm–Bonferroni adjusted over the comparison family.
    pub adjusted_p: f64,
}

impl Comparison {
    pub fn significant(&self, alpha: f64) -> bool {
        self.adjusted_p < alpha
    }
}

/// Paired t-tests of `run` against `baseline` for each metric both reports
/// share, adjusted together with Holm–Bonferroni.
///
/// Both reports must cover the same queries; the error lists the query ids
/// missing on either side.
pub fn compare(baseline: &RunReport, run: &RunReport) -> Result<Vec<Comparison>> {
    Ok(compare_all(baseline, std::slice::from_ref(run))?.remove(0))
}

/// [`compare`] for several runs at once, with the Holm–Bonferroni family
/// spanning every (run, metric) test.
pub fn compare_all(baseline: &RunReport, runs: &[RunReport]) -> Result<Vec<Vec<Comparison>>> {
    let mut raw: Vec<Vec<(Metric, f64, f64)>> = Vec::new();
    for run in runs {
        let mut tests = Vec::new();
        for base in &baseline.metrics {
            let Some(other) = run.get(base.metric) else { continue };
            let missing_in_run: Vec<&str> = base.per_query.keys().filter(|q| !other.per_query.contains_key(*q)).map(String::as_str).collect();
            let missing_in_base: Vec<&str> = other.per_query.keys().filter(|q| !base.per_query.contains_key(*q)).map(String::as_str).collect();
            if !missing_in_run.is_empty() || !missing_in_base.is_empty() {
                return Err(Error::Eval(format!(
                    "query sets differ between {:?} and {:?}: missing from {:?}: [{}]; missing from {:?}: [{}]",
                    baseline.tag,
                    run.tag,
                    run.tag,
                    missing_in_run.join(", "),
                    baseline.tag,
                    missing_in_base.join(", "),
                )));
            }
            let a: Vec<f64> = base.per_query.values().copied().collect();
            let b: Vec<f64> = other.per_query.values().copied().collect();
            tests.push((base.metric, other.mean - base.mean, paired_t_test(&a, &b)?));
        }
        raw.push(tests);
    }
    let flat: Vec<f64> = raw.iter().flatten().map(|t| t.2).collect();
    let mut adjusted = holm_bonferroni(&flat).into_iter();
    Ok(raw
        .into_iter()
        .map(|tests| {
            tests
                .into_iter()
                .map(|(metric, delta, p_value)| Comparison {
                    metric,
                    delta,
                    p_value,
                    adjusted_p: adjusted.next().expect("one adjusted value per test"),
                })
                .collect()
        })
        .collect())
}
