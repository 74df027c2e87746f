//! Single-file binary index format.
//!
//! ```text
//! magic    8 bytes  "QRFXIDX\0"
//! version  u32
//! analysis u8 stem flag, u32 stopword count, stopwords as strings
//! docs     u32 count, then per doc: docno, text, u32 analyzed length
//! terms    u32 count, then per term: term, u32 posting count, (u32 doc, u32 tf)*
//! ```
//!
//! Integers are little-endian; strings are a u32 byte length followed by UTF-8.
//! Index-time analysis travels with the file so queries are always analyzed
//! the same way the documents were.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use super::{Index, Posting};
use crate::error::{Error, Result};
use crate::textproc::AnalysisConfig;

const MAGIC: &[u8; 8] = b"QRFXIDX\0";
pub const FORMAT_VERSION: u32 = 1;

impl Index {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_tokens as usize * 8 + 1024);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.push(self.analysis.stem as u8);
        put_len(&mut out, self.analysis.stopwords.len());
        for w in self.analysis.stopwords.iter() {
            put_str(&mut out, w);
        }
        put_len(&mut out, self.docnos.len());
        for ((docno, text), &len) in self.docnos.iter().zip(&self.texts).zip(&self.doc_lengths) {
            put_str(&mut out, docno);
            put_str(&mut out, text);
            put_u32(&mut out, len);
        }
        put_len(&mut out, self.terms.len());
        for (term, list) in self.terms.iter().zip(&self.postings) {
            put_str(&mut out, term);
            put_len(&mut out, list.len());
            for p in list {
                put_u32(&mut out, p.doc);
                put_u32(&mut out, p.tf);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Index> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::IndexFormat("not an index file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::IndexVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let stem = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::IndexFormat(format!("bad stem flag {other}"))),
        };
        let n_stop = r.u32()? as usize;
        let mut stopwords = BTreeSet::new();
        for _ in 0..n_stop {
            stopwords.insert(r.string()?);
        }
        let n_docs = r.u32()? as usize;
        if n_docs == 0 {
            return Err(Error::IndexFormat("index holds no documents".into()));
        }
        let mut docnos = Vec::with_capacity(n_docs);
        let mut texts = Vec::with_capacity(n_docs);
        let mut lengths = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            docnos.push(r.string()?);
            texts.push(r.string()?);
            lengths.push(r.u32()?);
        }
        let n_terms = r.u32()? as usize;
        let mut terms = Vec::with_capacity(n_terms);
        let mut postings = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            terms.push(r.string()?);
            let n = r.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(n_docs));
            for _ in 0..n {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n_docs {
                    return Err(Error::IndexFormat(format!("posting references unknown doc {doc}")));
                }
                list.push(Posting { doc, tf });
            }
            postings.push(list);
        }
        if r.pos != bytes.len() {
            return Err(Error::IndexFormat("trailing bytes after index".into()));
        }
        let analysis = AnalysisConfig {
            stem,
            stopwords: Arc::new(stopwords),
        };
        Ok(Index::from_parts(analysis, docnos, texts, lengths, terms, postings))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Index> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Index::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    put_u32(out, u32::try_from(n).expect("index section exceeds u32"));
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_len(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::IndexFormat("truncated index file".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::IndexFormat("invalid UTF-8 in index".into()))
    }
}
