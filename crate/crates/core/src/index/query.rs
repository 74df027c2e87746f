use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::textproc::{analyze, AnalysisConfig};

/// A bag of analyzed terms with non-negative weights.
///
/// Terms are kept in lexicographic order so iteration, scoring and
/// serialization are deterministic. Zero weights are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedQuery {
    weights: BTreeMap<String, f64>,
    source_text: String,
}

impl WeightedQuery {
    pub fn new(source_text: impl Into<String>) -> Self {
        WeightedQuery {
            weights: BTreeMap::new(),
            source_text: source_text.into(),
        }
    }

    /// Analyze `text` and weight each term by its number of occurrences.
    pub fn from_text(text: &str, analysis: &AnalysisConfig) -> Self {
        let mut q = WeightedQuery::new(text);
        for term in analyze(text, analysis) {
            q.add(term.as_str(), 1.0);
        }
        q
    }

    pub fn from_weights<I, S>(source_text: impl Into<String>, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut q = WeightedQuery::new(source_text);
        for (term, w) in weights {
            let term = term.into();
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Usage(format!("weight for {term:?} must be finite and >= 0, got {w}")));
            }
            q.add(term, w);
        }
        Ok(q)
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn set_source_text(&mut self, text: impl Into<String>) {
        self.source_text = text.into();
    }

    /// Add `weight` to `term`. Non-positive weights are ignored.
    pub fn add(&mut self, term: impl Into<String>, weight: f64) {
        debug_assert!(weight.is_finite(), "non-finite weight");
        if weight > 0.0 {
            *self.weights.entry(term.into()).or_insert(0.0) += weight;
        }
    }

    pub fn get(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.weights.contains_key(term)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.weights.iter().map(|(t, &w)| (t.as_str(), w))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> + '_ {
        self.weights.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.values().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut q = WeightedQuery::new(self.source_text.clone());
        for (t, w) in self.iter() {
            q.add(t, w * factor);
        }
        q
    }

    /// Weights divided by their sum, so they form a distribution.
    pub fn normalized(&self) -> Self {
        let total = self.total_weight();
        if total > 0.0 {
            self.scaled(1.0 / total)
        } else {
            self.clone()
        }
    }

    /// Weights divided by the largest weight.
    pub fn max_normalized(&self) -> Self {
        let max = self.max_weight();
        if max > 0.0 {
            self.scaled(1.0 / max)
        } else {
            self.clone()
        }
    }

    /// `self + factor · other`, keeping this query's source text.
    pub fn add_scaled(&mut self, other: &WeightedQuery, factor: f64) {
        for (t, w) in other.iter() {
            self.add(t, w * factor);
        }
    }

    /// Parse the `term^weight` serialization produced by `Display`.
    /// A bare token without `^` gets weight 1.
    pub fn parse(source_text: impl Into<String>, serialized: &str) -> Result<Self> {
        let mut q = WeightedQuery::new(source_text);
        for token in serialized.split_whitespace() {
            let (term, weight) = match token.rsplit_once('^') {
                Some((t, w)) => {
                    let w: f64 = w
                        .parse()
                        .map_err(|_| Error::Usage(format!("bad weight in {token:?}")))?;
                    (t, w)
                }
                None => (token, 1.0),
            };
            if term.is_empty() || !w_ok(weight) {
                return Err(Error::Usage(format!("bad weighted term {token:?}")));
            }
            q.add(term, weight);
        }
        Ok(q)
    }
}

fn w_ok(w: f64) -> bool {
    w.is_finite() && w >= 0.0
}

/// Whitespace-separated `term^weight` pairs, four decimal places.
impl fmt::Display for WeightedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, w)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}^{w:.4}")?;
        }
        Ok(())
    }
}
