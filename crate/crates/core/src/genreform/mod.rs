//! Generative query reformulation: prompt construction, the generation
//! service client, likelihood-weighted paraphrase combination and fusion
//! with the original or RM3-expanded query.

mod client;
mod fixture;
mod prompt;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::WeightedQuery;
use crate::textproc::{analyze, AnalysisConfig};

pub use client::{generate, GenerationRequest, Generator, HttpClient, RelevanceScorer};
pub use fixture::{sha256_hex, FixtureEntry, FixtureGenerator, FixtureScorer};
pub use prompt::{build_prompt, estimate_tokens, PromptKind, MAX_PROMPT_TOKENS};
pub use wire::GenerationResult;

/// Combine paraphrases into one weighted query.
///
/// Every analyzed term of paraphrase `r` contributes the paraphrase's joint
/// likelihood `exp(log_likelihood)`, once per occurrence:
///
/// ```text
/// weight(t) = Σ_r  exp(ll_r) · count(t, r)
/// ```
///
/// ```
/// use qreform::genreform::{paraphrases_to_weighted_query, GenerationResult};
/// use qreform::textproc::AnalysisConfig;
/// let q = paraphrases_to_weighted_query(
///     &[GenerationResult::new("deep learning", 0.6f64.ln()), GenerationResult::new("deep neural", 0.3f64.ln())],
///     &AnalysisConfig::raw(),
/// )
/// .unwrap();
/// assert!((q.get("deep") - 0.9).abs() < 1e-12);
/// ```
pub fn paraphrases_to_weighted_query(
    results: &[GenerationResult],
    analysis: &AnalysisConfig,
) -> Result<WeightedQuery> {
    let mut query = WeightedQuery::new(
        results
            .iter()
            .map(|r| r.text.as_str())
            .collect::<Vec<_>>()
            .join(" | "),
    );
    for r in results {
        if !r.log_likelihood.is_finite() {
            return Err(Error::Usage(format!("non-finite likelihood for paraphrase {:?}", r.text)));
        }
        let w = r.weight();
        for term in analyze(&r.text, analysis) {
            query.add(term.into_string(), w);
        }
    }
    if query.is_empty() && !results.is_empty() {
        log::warn!("all {} paraphrases analyzed to no terms", results.len());
    }
    Ok(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// `k_rm3 · q_rm3 + k_gen · q_gen`
    Interpolate,
    /// Original terms plus `beta` per generated term occurrence.
    Append,
}

impl FusionMode {
    /// T5 reformulations interpolate with RM3; FLAN ones are appended to the
    /// original query without RM3.
    pub fn default_for(kind: PromptKind) -> Self {
        if kind.is_t5() {
            FusionMode::Interpolate
        } else {
            FusionMode::Append
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interpolate" => Ok(FusionMode::Interpolate),
            "append" => Ok(FusionMode::Append),
            _ => Err(Error::Config(format!("unknown fusion mode {s:?} (interpolate, append)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub k_rm3: f64,
    pub k_gen: f64,
    pub beta: f64,
    /// `None` picks [`FusionMode::default_for`] the reformulation kind.
    pub mode: Option<FusionMode>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            k_rm3: 1.0,
            k_gen: 0.5,
            beta: 0.2,
            mode: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_rm3", self.k_rm3), ("k_gen", self.k_gen), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("fusion {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn mode_for(&self, kind: PromptKind) -> FusionMode {
        self.mode.unwrap_or_else(|| FusionMode::default_for(kind))
    }
}

/// What the generator contributed to a fusion.
#[derive(Debug, Clone, Copy)]
pub enum Generated<'a> {
    Weighted(&'a WeightedQuery),
    Texts(&'a [String]),
}

/// `k_rm3 · rm3 + k_gen · generated`, term by term.
pub fn interpolate(rm3: &WeightedQuery, generated: &WeightedQuery, k_rm3: f64, k_gen: f64) -> WeightedQuery {
    let mut fused = WeightedQuery::new(rm3.source_text());
    fused.add_scaled(rm3, k_rm3);
    fused.add_scaled(generated, k_gen);
    fused
}

/// The original query plus `beta` for every analyzed term occurrence in the
/// generated texts. Repeats accumulate.
pub fn append(original: &WeightedQuery, texts: &[String], beta: f64, analysis: &AnalysisConfig) -> WeightedQuery {
    let mut fused = original.clone();
    for text in texts {
        for term in analyze(text, analysis) {
            fused.add(term.into_string(), beta);
        }
    }
    fused
}

/// Build the query handed to second-round retrieval.
///
/// Interpolation needs the RM3 query and a weighted generated query; append
/// needs the generated texts.
pub fn fuse(
    original: &WeightedQuery,
    rm3: Option<&WeightedQuery>,
    generated: Generated<'_>,
    mode: FusionMode,
    config: &FusionConfig,
    analysis: &AnalysisConfig,
) -> Result<WeightedQuery> {
    config.validate()?;
    let mut fused = match (mode, generated) {
        (FusionMode::Interpolate, Generated::Weighted(gen)) => {
            let rm3 = rm3.ok_or_else(|| Error::Usage("interpolate fusion needs the RM3 query".into()))?;
            interpolate(rm3, gen, config.k_rm3, config.k_gen)
        }
        (FusionMode::Append, Generated::Texts(texts)) => append(original, texts, config.beta, analysis),
        (FusionMode::Interpolate, Generated::Texts(_)) => {
            return Err(Error::Usage("interpolate fusion needs a weighted generated query".into()))
        }
        (FusionMode::Append, Generated::Weighted(_)) => {
            return Err(Error::Usage("append fusion needs the generated texts".into()))
        }
    };
    fused.set_source_text(original.source_text());
    Ok(fused)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wq(pairs: &[(&str, f64)]) -> WeightedQuery {
        WeightedQuery::from_weights("q", pairs.iter().map(|&(t, w)| (t, w))).unwrap()
    }

    #[test]
    fn token_probabilities_multiply() {
        let r = GenerationResult::from_token_probabilities("x", &[0.5, 0.4]);
        assert!((r.weight() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn eq17_by_hand() {
        let q = paraphrases_to_weighted_query(
            &[
                GenerationResult::new("deep learning", 0.6f64.ln()),
                GenerationResult::new("deep neural", 0.3f64.ln()),
            ],
            &AnalysisConfig::default(),
        )
        .unwrap();
        assert!((q.get("deep") - 0.9).abs() < 1e-12);
        assert!((q.get("learn") - 0.6).abs() < 1e-12);
        assert!((q.get("neural") - 0.3).abs() < 1e-12);
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn repeated_paraphrase_doubles() {
        let one = paraphrases_to_weighted_query(&[GenerationResult::new("fat tissue", -1.0)], &AnalysisConfig::default()).unwrap();
        let two = paraphrases_to_weighted_query(
            &[GenerationResult::new("fat tissue", -1.0), GenerationResult::new("fat tissue", -1.0)],
            &AnalysisConfig::default(),
        )
        .unwrap();
        for (t, w) in one.iter() {
            assert!((two.get(t) - 2.0 * w).abs() < 1e-15);
        }
    }

    #[test]
    fn all_stopword_paraphrases_give_empty_query() {
        let q = paraphrases_to_weighted_query(&[GenerationResult::new("the of and", -0.1)], &AnalysisConfig::default()).unwrap();
        assert!(q.is_empty());
        assert!(paraphrases_to_weighted_query(&[GenerationResult::new("a", f64::NAN)], &AnalysisConfig::default()).is_err());
    }

    #[test]
    fn interpolation_with_zero_gen_weight_is_rm3() {
        let rm3 = wq(&[("viscer", 0.38), ("defin", 0.32), ("fat", 0.3)]);
        let gen = wq(&[("organ", 0.4), ("viscer", 0.2)]);
        let cfg = FusionConfig { k_gen: 0.0, ..Default::default() };
        let fused = fuse(&rm3, Some(&rm3), Generated::Weighted(&gen), FusionMode::Interpolate, &cfg, &AnalysisConfig::default()).unwrap();
        assert_eq!(fused, rm3);
    }

    #[test]
    fn interpolation_defaults() {
        let cfg = FusionConfig::default();
        assert_eq!((cfg.k_rm3, cfg.k_gen, cfg.beta), (1.0, 0.5, 0.2));
        let fused = interpolate(&wq(&[("a", 0.5), ("b", 0.5)]), &wq(&[("b", 1.0), ("c", 0.2)]), cfg.k_rm3, cfg.k_gen);
        assert_eq!(fused.get("a"), 0.5);
        assert_eq!(fused.get("b"), 1.0);
        assert!((fused.get("c") - 0.1).abs() < 1e-15);
    }

    #[test]
    fn append_adds_beta_per_occurrence() {
        let analysis = AnalysisConfig::default();
        let original = WeightedQuery::from_text("define visceral", &analysis);
        let texts = vec!["viscera organs".to_string(), "organs".to_string()];
        let fused = fuse(&original, None, Generated::Texts(&texts), FusionMode::Append, &FusionConfig::default(), &analysis).unwrap();
        assert_eq!(fused.get("defin"), 1.0);
        assert_eq!(fused.get("viscer"), 1.0);
        assert!((fused.get("viscera") - 0.2).abs() < 1e-15);
        assert!((fused.get("organ") - 0.4).abs() < 1e-15);
        assert_eq!(fused.source_text(), "define visceral");
    }

    #[test]
    fn mode_input_mismatch_is_usage_error() {
        let a = AnalysisConfig::default();
        let q = wq(&[("a", 1.0)]);
        let cfg = FusionConfig::default();
        assert!(matches!(fuse(&q, None, Generated::Weighted(&q), FusionMode::Interpolate, &cfg, &a), Err(Error::Usage(_))));
        assert!(matches!(fuse(&q, None, Generated::Weighted(&q), FusionMode::Append, &cfg, &a), Err(Error::Usage(_))));
        assert!(matches!(fuse(&q, Some(&q), Generated::Texts(&[]), FusionMode::Interpolate, &cfg, &a), Err(Error::Usage(_))));
    }

    #[test]
    fn fusion_is_bilinear_in_its_weights() {
        let rm3 = wq(&[("a", 0.6), ("b", 0.4)]);
        let gen = wq(&[("b", 0.3), ("c", 0.7)]);
        let (a, b, c, d) = (0.7, 0.4, 0.25, 1.5);
        let whole = interpolate(&rm3, &gen, a + b, c + d);
        let mut parts = interpolate(&rm3, &gen, a, c);
        parts.add_scaled(&interpolate(&rm3, &gen, b, d), 1.0);
        for t in ["a", "b", "c"] {
            assert!((whole.get(t) - parts.get(t)).abs() < 1e-12, "{t}");
        }
    }

    #[test]
    fn per_kind_default_modes() {
        assert_eq!(FusionMode::default_for(PromptKind::T5Qr), FusionMode::Interpolate);
        assert_eq!(FusionMode::default_for(PromptKind::T5Prf), FusionMode::Interpolate);
        assert_eq!(FusionMode::default_for(PromptKind::FlanQr), FusionMode::Append);
        assert_eq!(FusionMode::default_for(PromptKind::FlanPrf), FusionMode::Append);
    }
}
