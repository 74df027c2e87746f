//! TREC file formats: qrels, run files and tab-separated topics.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::index::{RankedDoc, Ranking};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Relevance judgments: query id → docno → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    /// Add one judgment. A second judgment for the same pair is an error.
    pub fn insert(&mut self, qid: impl Into<String>, docno: impl Into<String>, grade: u32) -> Result<()> {
        let (qid, docno) = (qid.into(), docno.into());
        let per_query = self.judgments.entry(qid.clone()).or_default();
        if per_query.insert(docno.clone(), grade).is_some() {
            return Err(Error::Ingest(format!("duplicate judgment for query {qid}, document {docno}")));
        }
        Ok(())
    }

    /// Parse the 4-column format `qid iteration docno grade`.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (i, line) in contents.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |why: &str| Error::Ingest(format!("qrels line {}: {why}: {line:?}", i + 1));
            if fields.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let grade: i64 = fields[3].parse().map_err(|_| bad("grade is not an integer"))?;
            let grade = u32::try_from(grade).map_err(|_| bad("negative grade"))?;
            qrels
                .insert(fields[0], fields[2], grade)
                .map_err(|e| Error::Ingest(format!("qrels line {}: {e}", i + 1)))?;
        }
        Ok(qrels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Qrels::parse(&read(path.as_ref())?)
    }

    pub fn to_trec_string(&self) -> String {
        let mut out = String::new();
        for (qid, docs) in &self.judgments {
            for (docno, grade) in docs {
                writeln!(out, "{qid} 0 {docno} {grade}").unwrap();
            }
        }
        out
    }

    pub fn judgments(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn grade(&self, qid: &str, docno: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|j| j.get(docno))
            .copied()
            .unwrap_or(0)
    }

    /// Documents with grade > 0.
    pub fn relevant(&self, qid: &str) -> impl Iterator<Item = &str> + '_ {
        self.judgments
            .get(qid)
            .into_iter()
            .flat_map(|j| j.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d.as_str()))
    }

    pub fn num_relevant(&self, qid: &str) -> usize {
        self.relevant(qid).count()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Query topics in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topics {
    entries: Vec<(String, String)>,
}

impl Topics {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (qid, _) in &entries {
            if !seen.insert(qid.as_str()) {
                return Err(Error::Ingest(format!("duplicate topic id {qid}")));
            }
        }
        Ok(Topics { entries })
    }

    /// Parse `qid<TAB>query text` lines.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (qid, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::Ingest(format!("topics line {}: expected qid<TAB>text: {line:?}", i + 1)))?;
            let qid = qid.trim();
            if qid.is_empty() || qid.contains(char::is_whitespace) {
                return Err(Error::Ingest(format!("topics line {}: bad query id {qid:?}", i + 1)));
            }
            entries.push((qid.to_string(), text.trim().to_string()));
        }
        Topics::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Topics::parse(&read(path.as_ref())?)
    }

    pub fn to_tsv(&self) -> String {
        self.entries.iter().map(|(q, t)| format!("{q}\t{t}\n")).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.entries.iter().map(|(q, t)| (q.as_str(), t.as_str()))
    }

    pub fn get(&self, qid: &str) -> Option<&str> {
        self.entries.iter().find(|(q, _)| q == qid).map(|(_, t)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The rankings of one run file, in file order, plus its tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub tag: String,
    pub rankings: Vec<Ranking>,
}

impl Run {
    pub fn new(tag: impl Into<String>, rankings: Vec<Ranking>) -> Self {
        Run {
            tag: tag.into(),
            rankings,
        }
    }

    pub fn get(&self, qid: &str) -> Option<&Ranking> {
        self.rankings.iter().find(|r| r.query_id == qid)
    }

    /// Six whitespace-separated columns: `qid Q0 docno rank score tag`.
    ///
    /// Scores are written in shortest round-trip form, so parsing the output
    /// gives back the same rankings.
    pub fn to_trec_string(&self) -> String {
        let mut out = String::new();
        for r in &self.rankings {
            for (i, e) in r.entries.iter().enumerate() {
                writeln!(out, "{} Q0 {} {} {} {}", r.query_id, e.docno, i + 1, e.score, self.tag).unwrap();
            }
        }
        out
    }

    /// Lenient parse: rankings are re-sorted into canonical order and rank
    /// columns are ignored. Use [`validate_run`] for the strict check.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut per_query: BTreeMap<String, Vec<RankedDoc>> = BTreeMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        let mut tag: Option<String> = None;
        for (i, line) in contents.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let bad = |why: &str| Error::RunFormat(format!("line {}: {why}: {line:?}", i + 1));
            if f.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let score: f64 = f[4].parse().map_err(|_| bad("score is not a number"))?;
            if !score.is_finite() {
                return Err(bad("score is not finite"));
            }
            if !seen.insert((f[0].to_string(), f[2].to_string())) {
                return Err(bad("document listed twice for this query"));
            }
            match &tag {
                None => tag = Some(f[5].to_string()),
                Some(t) if t != f[5] => return Err(bad("run tag changes mid-file")),
                Some(_) => {}
            }
            if !per_query.contains_key(f[0]) {
                order.push(f[0].to_string());
            }
            per_query.entry(f[0].to_string()).or_default().push(RankedDoc {
                docno: f[2].to_string(),
                score,
            });
        }
        let rankings = order
            .into_iter()
            .map(|q| {
                let entries = per_query.remove(&q).unwrap_or_default();
                Ranking::new(q, entries)
            })
            .collect();
        Ok(Run {
            tag: tag.unwrap_or_default(),
            rankings,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Run::parse(&read(path.as_ref())?)
    }
}

/// What a valid run file contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub queries: usize,
    pub lines: usize,
    pub tag: Option<String>,
}

/// Strict run-file check: six columns, literal `Q0`, one tag, each query's
/// lines contiguous with ranks 1, 2, 3, … and non-increasing finite scores,
/// and no document repeated within a query.
pub fn validate_run(contents: &str) -> Result<RunSummary> {
    let mut finished: HashSet<String> = HashSet::new();
    let mut current: Option<String> = None;
    let mut docs: HashSet<String> = HashSet::new();
    let mut expected_rank = 1u64;
    let mut last_score = f64::INFINITY;
    let mut tag: Option<String> = None;
    let mut lines = 0;
    for (i, line) in contents.lines().enumerate() {
        let bad = |why: String| Error::RunFormat(format!("line {}: {why}", i + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 columns, found {}", f.len())));
        }
        if f[1] != "Q0" {
            return Err(bad(format!("second column must be Q0, found {:?}", f[1])));
        }
        if current.as_deref() != Some(f[0]) {
            if let Some(prev) = current.take() {
                finished.insert(prev);
            }
            if finished.contains(f[0]) {
                return Err(bad(format!("lines for query {} are not contiguous", f[0])));
            }
            current = Some(f[0].to_string());
            docs.clear();
            expected_rank = 1;
            last_score = f64::INFINITY;
        }
        let rank: u64 = f[3].parse().map_err(|_| bad(format!("rank {:?} is not an integer", f[3])))?;
        if rank != expected_rank {
            return Err(bad(format!("rank {rank} where {expected_rank} was expected")));
        }
        let score: f64 = f[4].parse().map_err(|_| bad(format!("score {:?} is not a number", f[4])))?;
        if !score.is_finite() {
            return Err(bad(format!("score {score} is not finite")));
        }
        if score > last_score {
            return Err(bad(format!("score {score} increases over previous {last_score}")));
        }
        if !docs.insert(f[2].to_string()) {
            return Err(bad(format!("document {} repeated for query {}", f[2], f[0])));
        }
        match &tag {
            None => tag = Some(f[5].to_string()),
            Some(t) if t != f[5] => return Err(bad(format!("tag {:?} differs from {t:?}", f[5]))),
            Some(_) => {}
        }
        expected_rank += 1;
        last_score = score;
        lines += 1;
    }
    if let Some(prev) = current {
        finished.insert(prev);
    }
    Ok(RunSummary {
        queries: finished.len(),
        lines,
        tag,
    })
}
