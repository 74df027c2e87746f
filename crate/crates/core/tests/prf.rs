mod common;

use std::collections::BTreeMap;

use common::{random_corpus, random_query, weighted};
use qreform::index::{Bm25Params, Index, RankedDoc, Ranking, WeightedQuery};
use qreform::prf::{dfr_scores, expand_dfr, expand_rm3, relevance_model, DfrModel, PrfConfig};
use qreform::textproc::{analyze, AnalysisConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn analyzed(docs: &[(String, String)]) -> BTreeMap<String, Vec<String>> {
    let a = AnalysisConfig::default();
    docs.iter()
        .map(|(d, t)| (d.clone(), analyze(t, &a).into_iter().map(|t| t.into_string()).collect()))
        .collect()
}

fn vocabulary(docs: &BTreeMap<String, Vec<String>>) -> Vec<String> {
    let mut v: Vec<String> = docs.values().flatten().cloned().collect();
    v.sort();
    v.dedup();
    v
}

/// Σ_d P(t|d) · s_d / Σ s, term by term over the whole vocabulary.
fn oracle_rm1(docs: &BTreeMap<String, Vec<String>>, fb: &[(String, f64)]) -> BTreeMap<String, f64> {
    let total: f64 = fb.iter().map(|x| x.1).sum();
    let mut out = BTreeMap::new();
    for term in vocabulary(docs) {
        let mut p = 0.0;
        for (d, s) in fb {
            let toks = &docs[d];
            if toks.is_empty() {
                continue;
            }
            let tf = toks.iter().filter(|t| **t == term).count() as f64;
            p += tf / toks.len() as f64 * s / total;
        }
        if p > 0.0 {
            out.insert(term, p);
        }
    }
    out
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(1.0)
}

fn ranking_of(fb: &[(String, f64)]) -> Ranking {
    Ranking::new(
        "q",
        fb.iter().map(|(d, s)| RankedDoc { docno: d.clone(), score: *s }).collect(),
    )
}

fn random_feedback(rng: &mut impl Rng, docs: &[(String, String)]) -> Vec<(String, f64)> {
    let k = rng.gen_range(1..=docs.len().min(10));
    docs[..k].iter().map(|(d, _)| (d.clone(), rng.gen_range(0.5..20.0))).collect()
}

#[test]
fn relevance_model_matches_double_loop() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_corpus(&mut rng, 50);
        let index = Index::build(docs.clone(), AnalysisConfig::default()).unwrap();
        let fb = random_feedback(&mut rng, &docs);
        let ids: Vec<_> = fb.iter().map(|(d, s)| (index.doc_id(d).unwrap(), *s)).collect();
        let got = relevance_model(&index, &ids);
        let want = oracle_rm1(&analyzed(&docs), &fb);
        assert_eq!(got.len(), want.len(), "seed {seed}");
        for (t, p) in &want {
            assert!(close(got[t.as_str()], *p, 1e-12), "seed {seed} {t}");
        }
    }
}

#[test]
fn rm3_without_truncation_is_the_mixture() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let docs = random_corpus(&mut rng, 50);
        let index = Index::build(docs.clone(), AnalysisConfig::default()).unwrap();
        let q = weighted(&random_query(&mut rng));
        let fb = random_feedback(&mut rng, &docs);
        let ranking = ranking_of(&fb);
        let lambda = rng.gen_range(0.0..1.0);
        let cfg = PrfConfig {
            fb_docs: fb.len(),
            fb_terms: index.vocabulary_size() + 1,
            rm3_lambda: lambda,
        };
        let rm1 = oracle_rm1(&analyzed(&docs), &fb);
        if rm1.is_empty() || q.is_empty() {
            continue;
        }
        let got = expand_rm3(&index, &q, &ranking, &cfg).unwrap().query;
        let qn = q.total_weight();
        // Empty feedback documents leave RM1 short of 1; the kept terms are renormalized.
        let mass: f64 = rm1.values().sum();
        let mut want: BTreeMap<&str, f64> = BTreeMap::new();
        for (t, w) in q.iter() {
            *want.entry(t).or_default() += lambda * w / qn;
        }
        for (t, p) in &rm1 {
            *want.entry(t.as_str()).or_default() += (1.0 - lambda) * p / mass;
        }
        want.retain(|_, w| *w > 0.0);
        assert_eq!(got.len(), want.len(), "seed {seed}");
        for (t, w) in want {
            assert!(close(got.get(t), w, 1e-12), "seed {seed} {t}");
        }
        assert!(close(got.total_weight(), 1.0, 1e-12));
    }
}

#[test]
fn rm3_keeps_the_best_terms() {
    let docs = [("a", "alpha alpha alpha beta beta gamma"), ("b", "alpha beta delta")];
    let index = Index::build(docs, AnalysisConfig::raw()).unwrap();
    let ranking = Ranking::new(
        "q",
        vec![RankedDoc { docno: "a".into(), score: 3.0 }, RankedDoc { docno: "b".into(), score: 1.0 }],
    );
    let q = WeightedQuery::from_text("alpha", index.analysis());
    let cfg = PrfConfig { fb_docs: 2, fb_terms: 2, rm3_lambda: 0.5 };
    let e = expand_rm3(&index, &q, &ranking, &cfg).unwrap();
    // RM1: alpha 0.75·1/2 + 0.25·1/3, beta 0.75·1/3 + 0.25·1/3.
    let (pa, pb) = (0.75 / 2.0 + 0.25 / 3.0, 1.0 / 3.0);
    assert_eq!(e.query.terms().collect::<Vec<_>>(), ["alpha", "beta"]);
    assert!(close(e.query.get("alpha"), 0.5 + 0.5 * pa / (pa + pb), 1e-12));
    assert!(close(e.query.get("beta"), 0.5 * pb / (pa + pb), 1e-12));
}

fn oracle_dfr(docs: &BTreeMap<String, Vec<String>>, fb: &[String], model: DfrModel) -> BTreeMap<String, f64> {
    let n = docs.len() as f64;
    let tokens: f64 = docs.values().map(|d| d.len() as f64).sum();
    let len_x: f64 = fb.iter().map(|d| docs[d].len() as f64).sum();
    let mut out = BTreeMap::new();
    for term in vocabulary(docs) {
        let tf_x = fb.iter().map(|d| docs[d].iter().filter(|t| **t == term).count()).sum::<usize>() as f64;
        if tf_x == 0.0 {
            continue;
        }
        let big_f = docs.values().map(|d| d.iter().filter(|t| **t == term).count()).sum::<usize>() as f64;
        let w = match model {
            DfrModel::Bo1 => {
                let pn = big_f / n;
                tf_x * ((1.0 + pn) / pn).log2() + (1.0 + pn).log2()
            }
            DfrModel::Kl => {
                let px = tf_x / len_x;
                px * (px / (big_f / tokens)).log2()
            }
        };
        out.insert(term, w);
    }
    out
}

#[test]
fn dfr_scores_match_closed_forms() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let docs = random_corpus(&mut rng, 50);
        let index = Index::build(docs.clone(), AnalysisConfig::default()).unwrap();
        let fb: Vec<String> = random_feedback(&mut rng, &docs).into_iter().map(|x| x.0).collect();
        let ids: Vec<_> = fb.iter().map(|d| (index.doc_id(d).unwrap(), 1.0)).collect();
        for model in [DfrModel::Bo1, DfrModel::Kl] {
            let got = dfr_scores(&index, &ids, model);
            let want = oracle_dfr(&analyzed(&docs), &fb, model);
            assert_eq!(got.len(), want.len());
            for (t, w) in &want {
                assert!(close(got[t.as_str()], *w, 1e-12), "seed {seed} {model:?} {t}");
            }
        }
    }
}

#[test]
fn dfr_expansion_is_max_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let docs = random_corpus(&mut rng, 80);
    let index = Index::build(docs, AnalysisConfig::default()).unwrap();
    let q = WeightedQuery::from_weights("", [("river", 2.0), ("stone", 4.0)]).unwrap();
    let ranking = index.search(&q, 10, &Bm25Params::default());
    for model in [DfrModel::Bo1, DfrModel::Kl] {
        let e = expand_dfr(&index, &q, &ranking, model, &PrfConfig::default()).unwrap();
        assert!(e.feedback_used);
        assert!(e.query.len() <= 2 + 10);
        // Best term contributes exactly 1; the original's max term already has 1.
        assert!(e.query.max_weight() <= 2.0 + 1e-12);
        assert!(e.query.get("stone") >= 1.0);
        assert!(e.query.get("river") >= 0.5);
    }
    let e = expand_dfr(&index, &q, &Ranking::default(), DfrModel::Bo1, &PrfConfig::default()).unwrap();
    assert!(!e.feedback_used);
    assert_eq!(e.query, q.max_normalized());
}

#[test]
fn expansion_rejects_unknown_documents() {
    let index = Index::build([("a", "river")], AnalysisConfig::default()).unwrap();
    let ranking = Ranking::new("q", vec![RankedDoc { docno: "zz".into(), score: 1.0 }]);
    let q = WeightedQuery::from_text("river", index.analysis());
    assert!(expand_rm3(&index, &q, &ranking, &PrfConfig::default()).is_err());
    assert!(expand_dfr(&index, &q, &ranking, DfrModel::Kl, &PrfConfig::default()).is_err());
}
