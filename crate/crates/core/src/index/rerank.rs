use super::{sort_entries, Index, RankedDoc, Ranking};
use crate::context::split_passages_for;
use crate::error::{Error, Result};
use crate::genreform::RelevanceScorer;

/// Re-score each ranked document by the best external relevance score over
/// its passages, then re-sort.
///
/// The candidate set is unchanged. A document with no tokens is scored as a
/// single empty passage. On any scorer error the input ranking is left as is
/// and the error is returned.
pub fn rerank_maxpassage(
    index: &Index,
    ranking: &Ranking,
    query_text: &str,
    scorer: &dyn RelevanceScorer,
    window: usize,
    stride: usize,
) -> Result<Ranking> {
    let mut entries = Vec::with_capacity(ranking.len());
    for entry in &ranking.entries {
        let text = index
            .doc_text(&entry.docno)
            .ok_or_else(|| Error::Usage(format!("ranked document {:?} is not in the index", entry.docno)))?;
        let passages = split_passages_for(&entry.docno, text, window, stride)?;
        let mut best = f64::NEG_INFINITY;
        let texts: Vec<&str> = if passages.is_empty() {
            vec![""]
        } else {
            passages.iter().map(|p| p.text.as_str()).collect()
        };
        for passage in texts {
            let s = scorer.score(query_text, passage)?;
            if !s.is_finite() {
                return Err(Error::Protocol(format!(
                    "scorer returned {s} for document {:?}",
                    entry.docno
                )));
            }
            best = best.max(s);
        }
        entries.push(RankedDoc {
            docno: entry.docno.clone(),
            score: best,
        });
    }
    sort_entries(&mut entries);
    Ok(Ranking {
        query_id: ranking.query_id.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genreform::FixtureScorer;
    use crate::textproc::AnalysisConfig;

    fn index() -> Index {
        Index::build(
            [("a", "alpha one two"), ("b", "beta three four"), ("c", "")],
            AnalysisConfig::raw(),
        )
        .unwrap()
    }

    #[test]
    fn two_docs_two_passages_take_the_max() {
        let idx = Index::build([("d1", "p q r"), ("d2", "s t u")], AnalysisConfig::raw()).unwrap();
        let mut s = FixtureScorer::default();
        s.insert("x", "p q", 0.9);
        s.insert("x", "q r", 0.1);
        s.insert("x", "s t", 0.5);
        s.insert("x", "t u", 0.6);
        let input = Ranking::new("7", vec![RankedDoc { docno: "d2".into(), score: 3.0 }, RankedDoc { docno: "d1".into(), score: 1.0 }]);
        let out = rerank_maxpassage(&idx, &input, "x", &s, 2, 1).unwrap();
        assert_eq!(out.query_id, "7");
        assert_eq!(out.docnos().collect::<Vec<_>>(), ["d1", "d2"]);
        assert_eq!(out.entries[0].score, 0.9);
        assert_eq!(out.entries[1].score, 0.6);
    }

    #[test]
    fn constant_scores_fall_back_to_docno_order() {
        let input = Ranking::new("q", ["c", "b", "a"].iter().enumerate().map(|(i, d)| RankedDoc { docno: d.to_string(), score: 10.0 - i as f64 }).collect());
        let out = rerank_maxpassage(&index(), &input, "q", &FixtureScorer::constant(1.0), 128, 64).unwrap();
        assert_eq!(out.docnos().collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn non_finite_scores_are_protocol_errors() {
        let input = Ranking::new("q", vec![RankedDoc { docno: "a".into(), score: 1.0 }]);
        let err = rerank_maxpassage(&index(), &input, "q", &FixtureScorer::constant(f64::NAN), 128, 64).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn missing_score_leaves_input_alone() {
        let input = Ranking::new("q", vec![RankedDoc { docno: "a".into(), score: 1.0 }]);
        let before = input.clone();
        assert!(rerank_maxpassage(&index(), &input, "q", &FixtureScorer::default(), 128, 64).is_err());
        assert_eq!(input, before);
    }
}
