mod common;

use std::collections::BTreeMap;

use common::{random_corpus, toy_index};
use qreform::genreform::{
    append, fuse, generate, interpolate, paraphrases_to_weighted_query, FixtureGenerator, FusionConfig, FusionMode,
    Generated, GenerationRequest, GenerationResult,
};
use qreform::index::{Bm25Params, Index, WeightedQuery};
use qreform::textproc::{analyze, AnalysisConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_results(rng: &mut impl Rng) -> Vec<GenerationResult> {
    let n = rng.gen_range(1..=5);
    (0..n)
        .map(|_| {
            let (_, text) = random_corpus(rng, 1).remove(0);
            let text: String = text.split_whitespace().take(rng.gen_range(1..8)).collect::<Vec<_>>().join(" ");
            GenerationResult::new(text, -rng.gen_range(0.01..6.0))
        })
        .collect()
}

/// weight(t) = Σ_r Π_i p_ri · count(t, r), with each paraphrase's joint
/// probability rebuilt from a per-token factorization.
fn oracle_weights(results: &[(String, Vec<f64>)], analysis: &AnalysisConfig) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (text, probs) in results {
        let joint: f64 = probs.iter().product();
        for t in analyze(text, analysis) {
            *out.entry(t.into_string()).or_insert(0.0) += joint;
        }
    }
    out
}

#[test]
fn weights_are_likelihood_times_count() {
    let analysis = AnalysisConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let factored: Vec<(String, Vec<f64>)> = random_results(&mut rng)
            .into_iter()
            .map(|r| {
                let k = r.text.split_whitespace().count().max(1);
                (r.text, (0..k).map(|_| rng.gen_range(0.2..1.0)).collect())
            })
            .collect();
        let results: Vec<GenerationResult> = factored
            .iter()
            .map(|(t, p)| GenerationResult::from_token_probabilities(t.clone(), p))
            .collect();
        for (r, (_, p)) in results.iter().zip(&factored) {
            let joint: f64 = p.iter().product();
            assert!((r.weight() - joint).abs() <= 1e-12 * joint.max(1e-300));
        }
        let got = paraphrases_to_weighted_query(&results, &analysis).unwrap();
        let want = oracle_weights(&factored, &analysis);
        assert_eq!(got.len(), want.len());
        for (t, w) in want {
            assert!((got.get(&t) - w).abs() <= 1e-12 * w.max(1.0), "{t}");
        }
    }
}

#[test]
fn uniform_likelihood_scaling_preserves_the_ranking() {
    let index = toy_index();
    let params = Bm25Params::default();
    let analysis = index.analysis().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let base = vec![
            GenerationResult::new("roman aqueduct water supply", -rng.gen_range(0.1..3.0)),
            GenerationResult::new("visceral fat organs", -rng.gen_range(0.1..3.0)),
            GenerationResult::new("solar cell efficiency", -rng.gen_range(0.1..3.0)),
        ];
        let shifted: Vec<_> = base
            .iter()
            .map(|r| GenerationResult::new(r.text.clone(), r.log_likelihood - 2f64.ln()))
            .collect();
        let a = paraphrases_to_weighted_query(&base, &analysis).unwrap();
        let b = paraphrases_to_weighted_query(&shifted, &analysis).unwrap();
        for (t, w) in a.iter() {
            assert!((b.get(t) * 2.0 - w).abs() < 1e-12);
        }
        let ra = index.search(&a, 50, &params);
        let rb = index.search(&b, 50, &params);
        assert_eq!(ra.docnos().collect::<Vec<_>>(), rb.docnos().collect::<Vec<_>>());
    }
}

#[test]
fn non_finite_likelihood_is_rejected() {
    let r = [GenerationResult::new("x", f64::NAN)];
    assert!(paraphrases_to_weighted_query(&r, &AnalysisConfig::default()).is_err());
}

#[test]
fn generate_keeps_the_most_likely() {
    let prompt = "refine: define visceral";
    let line = serde_json::to_string(&qreform::genreform::FixtureEntry::for_prompt(
        prompt,
        vec![
            GenerationResult::new("c", -3.0),
            GenerationResult::new("a", -0.1),
            GenerationResult::new("b", -1.0),
        ],
    ))
    .unwrap();
    let fx = FixtureGenerator::parse(&line).unwrap();
    let mut req = GenerationRequest::new("1", prompt);
    req.num_return = 2;
    let got: Vec<String> = generate(&fx, &req).unwrap().into_iter().map(|r| r.text).collect();
    assert_eq!(got, ["a", "b"]);
    req.num_return = 0;
    assert!(generate(&fx, &req).is_err());
}

fn random_query(rng: &mut impl Rng, vocab: &[&str]) -> WeightedQuery {
    let weights: Vec<(&str, f64)> = vocab
        .iter()
        .map(|t| (*t, if rng.gen_bool(0.5) { rng.gen_range(0.0..2.0) } else { 0.0 }))
        .collect();
    WeightedQuery::from_weights("q", weights).unwrap()
}

#[test]
fn interpolation_degenerates_to_rm3() {
    let vocab = ["a", "b", "c", "d", "e"];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let rm3 = random_query(&mut rng, &vocab);
        let gen = random_query(&mut rng, &vocab);
        assert_eq!(interpolate(&rm3, &gen, 1.0, 0.0), rm3);
        let x = interpolate(&rm3, &gen, 1.0, 0.5);
        for t in vocab {
            assert!((x.get(t) - (rm3.get(t) + 0.5 * gen.get(t))).abs() < 1e-15);
        }
    }
}

#[test]
fn append_adds_beta_per_occurrence() {
    let analysis = AnalysisConfig::default();
    let original = WeightedQuery::from_text("define visceral", &analysis);
    let texts = vec!["visceral organs".to_string(), "organs of the body".to_string()];
    let q = append(&original, &texts, 0.2, &analysis);
    assert!((q.get("viscer") - 1.2).abs() < 1e-12);
    assert!((q.get("organ") - 0.4).abs() < 1e-12);
    assert!((q.get("bodi") - 0.2).abs() < 1e-12);
    assert_eq!(q.get("defin"), 1.0);
    assert!(!q.contains("the"));
}

#[test]
fn fuse_checks_its_inputs() {
    let analysis = AnalysisConfig::default();
    let original = WeightedQuery::from_text("define visceral", &analysis);
    let cfg = FusionConfig::default();
    let texts = vec!["visceral fat".to_string()];
    assert!(fuse(&original, None, Generated::Weighted(&original), FusionMode::Interpolate, &cfg, &analysis).is_err());
    assert!(fuse(&original, Some(&original), Generated::Texts(&texts), FusionMode::Interpolate, &cfg, &analysis).is_err());
    assert!(fuse(&original, None, Generated::Weighted(&original), FusionMode::Append, &cfg, &analysis).is_err());
    let fused = fuse(&original, None, Generated::Texts(&texts), FusionMode::Append, &cfg, &analysis).unwrap();
    assert_eq!(fused.source_text(), "define visceral");
}

#[test]
fn empty_paraphrases_give_an_empty_query() {
    let index = Index::build([("a", "river")], AnalysisConfig::default()).unwrap();
    let q = paraphrases_to_weighted_query(&[GenerationResult::new("the of", -0.5)], index.analysis()).unwrap();
    assert!(q.is_empty());
    assert!(index.search(&q, 10, &Bm25Params::default()).is_empty());
}
