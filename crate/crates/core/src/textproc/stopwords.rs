use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Terrier's English stoplist, one word per line.
pub const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Parse a one-word-per-line stoplist. Entries are trimmed and lowercased,
/// blank lines are ignored and duplicates collapse.
pub fn parse_stopword_list(contents: &str) -> Result<BTreeSet<String>> {
    let words: BTreeSet<String> = contents
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    if words.is_empty() {
        return Err(Error::Config("stopword list is empty".into()));
    }
    Ok(words)
}

pub fn load_stopword_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read stopword list {}: {e}", path.display())))?;
    parse_stopword_list(&contents)
        .map_err(|_| Error::Config(format!("stopword list {} is empty", path.display())))
}
