//! Text analysis shared by indexing, querying, passage scoring and the
//! stopword filter.
//!
//! The pipeline is fixed: lowercase, split on every non-alphanumeric
//! character, drop surface forms found in the stoplist, then Porter-stem.
//! Stopword removal happens before stemming so the stoplist is matched against
//! what the text actually says.

pub mod porter;
mod stopwords;

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

pub use stopwords::{load_stopword_list, parse_stopword_list, BUNDLED_STOPWORDS};

/// Ordered, shareable stoplist.
pub type Stoplist = Arc<BTreeSet<String>>;

/// The bundled 733-word Terrier list, parsed once.
pub fn default_stoplist() -> Stoplist {
    static LIST: OnceLock<Stoplist> = OnceLock::new();
    LIST.get_or_init(|| {
        Arc::new(parse_stopword_list(BUNDLED_STOPWORDS).expect("bundled stoplist is well formed"))
    })
    .clone()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisConfig {
    pub stem: bool,
    pub stopwords: Stoplist,
}

impl Default for AnalysisConfig {
    /// Porter stemming with the bundled stoplist.
    fn default() -> Self {
        AnalysisConfig {
            stem: true,
            stopwords: default_stoplist(),
        }
    }
}

impl AnalysisConfig {
    /// No stemming, no stopwords. Useful in tests and for inspecting raw tokens.
    pub fn raw() -> Self {
        AnalysisConfig {
            stem: false,
            stopwords: Arc::new(BTreeSet::new()),
        }
    }

    pub fn is_stopword(&self, surface: &str) -> bool {
        self.stopwords.contains(surface)
    }
}

/// An analyzed, indexable term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(String);

impl Term {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Term {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Lowercased alphanumeric runs of `text`, before stopping and stemming.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Analyze `text` into index terms, preserving order.
///
/// ```
/// use qreform::textproc::{analyze, AnalysisConfig};
/// let terms: Vec<String> = analyze("Define visceral", &AnalysisConfig::default())
///     .into_iter()
///     .map(|t| t.into_string())
///     .collect();
/// assert_eq!(terms, ["defin", "viscer"]);
/// ```
pub fn analyze(text: &str, config: &AnalysisConfig) -> Vec<Term> {
    tokenize(text)
        .filter(|surface| !config.is_stopword(surface))
        .map(|surface| {
            if config.stem {
                Term(porter::stem(&surface))
            } else {
                Term(surface)
            }
        })
        .collect()
}
