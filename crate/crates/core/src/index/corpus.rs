use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Deserialize)]
struct JsonDoc {
    docno: String,
    text: String,
}

/// Parse line-delimited corpus records.
///
/// Each non-blank line is either `docno<TAB>text` or a JSON object with
/// `docno` and `text` fields. The format is chosen per line, so the two can
/// be mixed.
pub fn parse_corpus(contents: &str) -> Result<Vec<(String, String)>> {
    let mut docs = Vec::new();
    for (lineno, line) in contents.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let record = if line.trim_start().starts_with('{') {
            let doc: JsonDoc = serde_json::from_str(line)
                .map_err(|e| Error::Ingest(format!("corpus line {}: {e}", lineno + 1)))?;
            (doc.docno, doc.text)
        } else {
            let (docno, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::Ingest(format!("corpus line {}: expected docno<TAB>text", lineno + 1)))?;
            (docno.to_string(), text.to_string())
        };
        if record.0.trim().is_empty() || record.0.chars().any(char::is_whitespace) {
            return Err(Error::Ingest(format!(
                "corpus line {}: docno {:?} must be non-empty and contain no whitespace",
                lineno + 1,
                record.0
            )));
        }
        docs.push(record);
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&contents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_and_json_lines() {
        let docs = parse_corpus("d1\tfirst doc\n\n{\"docno\": \"d2\", \"text\": \"second\\tdoc\"}\n").unwrap();
        assert_eq!(docs, [("d1".into(), "first doc".into()), ("d2".into(), "second\tdoc".into())]);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let err = parse_corpus("d1\tok\nno-tab-here\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_corpus("{\"docno\": 1}").is_err());
        assert!(parse_corpus("a b\ttext").is_err());
    }
}
