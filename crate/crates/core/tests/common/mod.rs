//! Independent oracles and toy-data helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use qreform::eval::{Qrels, Topics};
use qreform::index::{Index, WeightedQuery};
use qreform::pipeline::PipelineConfig;
use qreform::textproc::{analyze, AnalysisConfig};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn toy(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

pub fn toy_corpus() -> Vec<(String, String)> {
    qreform::index::read_corpus(toy("corpus.tsv")).unwrap()
}

pub fn toy_index() -> Index {
    Index::build(toy_corpus(), AnalysisConfig::default()).unwrap()
}

pub fn toy_topics() -> Topics {
    Topics::load(toy("topics.tsv")).unwrap()
}

pub fn toy_qrels() -> Qrels {
    Qrels::load(toy("qrels.txt")).unwrap()
}

/// Defaults plus the bundled generation fixture.
pub fn toy_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.generation.fixture = Some(toy("generations.jsonl"));
    cfg
}

fn terms(text: &str, analysis: &AnalysisConfig) -> Vec<String> {
    analyze(text, analysis).into_iter().map(|t| t.into_string()).collect()
}

/// Full-scan BM25 over raw texts: every document scored directly from its
/// analyzed tokens, no index structures.
pub fn naive_bm25(
    docs: &[(String, String)],
    analysis: &AnalysisConfig,
    query: &[(String, f64)],
    k1: f64,
    b: f64,
) -> Vec<(String, f64)> {
    let analyzed: Vec<Vec<String>> = docs.iter().map(|(_, t)| terms(t, analysis)).collect();
    let n = docs.len() as f64;
    let avgdl = analyzed.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut out = Vec::new();
    for (i, (docno, _)) in docs.iter().enumerate() {
        let len = analyzed[i].len() as f64;
        let mut score = 0.0;
        for (term, w) in query {
            let tf = analyzed[i].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = analyzed.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln().max(0.0);
            score += w * idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avgdl));
        }
        if score > 0.0 {
            out.push((docno.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

const WORDS: &[&str] = &[
    "river", "stone", "bridge", "water", "city", "empire", "bee", "hive", "honey", "solar", "panel", "cell",
    "bone", "calcium", "light", "organ", "fat", "body", "market", "price", "trade", "ship", "harbor", "storm",
    "cloud", "rain", "forest", "tree", "leaf", "root", "the", "of", "and",
];

/// A random corpus over a small Zipf-skewed vocabulary. Some documents may
/// analyze to nothing.
pub fn random_corpus(rng: &mut impl Rng, max_docs: usize) -> Vec<(String, String)> {
    let n = rng.gen_range(1..=max_docs);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(0..40);
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    let r: f64 = rng.gen();
                    WORDS[((r * r) * WORDS.len() as f64) as usize]
                })
                .collect();
            (format!("doc{i:03}"), text.join(" "))
        })
        .collect()
}

pub fn random_query(rng: &mut impl Rng) -> Vec<(String, f64)> {
    let mut words: Vec<&str> = WORDS.to_vec();
    words.shuffle(rng);
    let n = rng.gen_range(1..=4);
    words[..n]
        .iter()
        .filter(|w| !["the", "of", "and"].contains(w))
        .map(|w| (qreform::textproc::porter::stem(w), rng.gen_range(0.1..3.0)))
        .collect()
}

pub fn weighted(query: &[(String, f64)]) -> WeightedQuery {
    WeightedQuery::from_weights("", query.iter().map(|(t, w)| (t.as_str(), *w))).unwrap()
}

/// Word windows by direct index arithmetic.
pub fn naive_windows(text: &str, window: usize, stride: usize) -> Vec<Vec<String>> {
    let toks: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let mut out = Vec::new();
    if toks.is_empty() {
        return out;
    }
    let mut k = 0;
    loop {
        let start = k * stride;
        let end = usize::min(start + window, toks.len());
        out.push(toks[start..end].to_vec());
        if end == toks.len() {
            return out;
        }
        k += 1;
    }
}

/// `Σ rel_i / log2(i + 1)` over the first `k` positions, by the definition.
pub fn oracle_dcg(ranking: &[&str], grades: &BTreeMap<&str, u32>, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..=k.min(ranking.len()) {
        let rel = *grades.get(ranking[i - 1]).unwrap_or(&0) as f64;
        total += rel / (i as f64 + 1.0).log2();
    }
    total
}

pub fn oracle_ndcg(ranking: &[&str], grades: &BTreeMap<&str, u32>, k: usize) -> f64 {
    let mut ideal: Vec<(&str, u32)> = grades.iter().map(|(d, g)| (*d, *g)).filter(|x| x.1 > 0).collect();
    ideal.sort_by(|a, b| b.1.cmp(&a.1));
    let ideal_docs: Vec<&str> = ideal.iter().map(|x| x.0).collect();
    let idcg = oracle_dcg(&ideal_docs, grades, k);
    if idcg == 0.0 {
        0.0
    } else {
        oracle_dcg(ranking, grades, k) / idcg
    }
}

pub fn oracle_ap(ranking: &[&str], grades: &BTreeMap<&str, u32>) -> f64 {
    let rel: BTreeSet<&str> = grades.iter().filter(|x| *x.1 > 0).map(|x| *x.0).collect();
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if rel.contains(d) {
            let hits_so_far = ranking[..=i].iter().filter(|x| rel.contains(*x)).count();
            sum += hits_so_far as f64 / (i + 1) as f64;
        }
    }
    sum / rel.len() as f64
}

/// Γ((ν+1)/2) / Γ(ν/2) for integer ν ≥ 1, from Γ(1/2) = √π, Γ(1) = 1 and Γ(x+1) = xΓ(x).
fn gamma_ratio(nu: u32) -> f64 {
    fn gamma_half_int(twice: u32) -> f64 {
        // Γ(twice / 2)
        let (mut x, mut g) = if twice % 2 == 0 { (1.0, 1.0) } else { (0.5, std::f64::consts::PI.sqrt()) };
        while x < twice as f64 / 2.0 - 1e-9 {
            g *= x;
            x += 1.0;
        }
        g
    }
    gamma_half_int(nu + 1) / gamma_half_int(nu)
}

/// Two-sided tail probability of Student's t with `nu` degrees of freedom,
/// by composite Simpson integration of the density over [0, |t|].
pub fn oracle_t_two_sided(t: f64, nu: u32) -> f64 {
    let v = nu as f64;
    let c = gamma_ratio(nu) / (v * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0);
    let a = t.abs();
    let n = 200_000;
    let h = a / n as f64;
    let mut s = f(0.0) + f(a);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

/// Paired t-test p-value via [`oracle_t_two_sided`].
pub fn oracle_paired_p(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    oracle_t_two_sided(mean / (sd / n.sqrt()), a.len() as u32 - 1)
}

/// Holm step-down written as the textbook loop over sorted p-values.
pub fn oracle_holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut out = vec![0.0; m];
    for (pos, &i) in idx.iter().enumerate() {
        let mut best = 0.0f64;
        for (j, &k) in idx[..=pos].iter().enumerate() {
            best = best.max(f64::min(1.0, (m - j) as f64 * p[k]));
        }
        out[i] = best;
    }
    out
}

pub fn oracle_rr(ranking: &[&str], grades: &BTreeMap<&str, u32>) -> f64 {
    for (i, d) in ranking.iter().enumerate() {
        if grades.get(d).copied().unwrap_or(0) > 0 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

pub fn oracle_recall(ranking: &[&str], grades: &BTreeMap<&str, u32>, k: usize) -> f64 {
    let rel = grades.values().filter(|g| **g > 0).count();
    let hit = ranking.iter().take(k).filter(|d| grades.get(*d).copied().unwrap_or(0) > 0).count();
    hit as f64 / rel as f64
}

/// A random graded judgment set with at least one relevant document and a
/// ranking drawn partly from it.
pub fn random_judged_ranking(rng: &mut impl Rng) -> (Vec<String>, BTreeMap<String, u32>) {
    let pool: Vec<String> = (0..40).map(|i| format!("d{i:02}")).collect();
    let mut grades = BTreeMap::new();
    for d in &pool[..rng.gen_range(1..20)] {
        grades.insert(d.clone(), rng.gen_range(0..4));
    }
    let first = pool[0].clone();
    grades.insert(first, rng.gen_range(1..4));
    let mut ranking = pool.clone();
    ranking.shuffle(rng);
    ranking.truncate(rng.gen_range(0..40));
    (ranking, grades)
}
