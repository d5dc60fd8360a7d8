//! Alignment-consistent phrase pairs and their relative-frequency scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::translation::ibm1::Alignment;
use crate::translation::source::is_null_token;

#[derive(Clone, Debug, PartialEq)]
pub struct PhraseEntry {
    pub target: Vec<String>,
    /// `ln p(target | source)`
    pub fwd: f64,
    /// `ln p(source | target)`
    pub bwd: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhraseTable {
    entries: BTreeMap<Vec<String>, Vec<PhraseEntry>>,
    max_len: usize,
}

impl PhraseTable {
    /// Builds a table from `(source, target, fwd, bwd)` rows.
    pub fn from_entries(rows: impl IntoIterator<Item = (Vec<String>, Vec<String>, f64, f64)>) -> Self {
        let mut entries: BTreeMap<Vec<String>, Vec<PhraseEntry>> = BTreeMap::new();
        for (src, target, fwd, bwd) in rows {
            entries.entry(src).or_default().push(PhraseEntry { target, fwd, bwd });
        }
        for list in entries.values_mut() {
            list.sort_by(|a, b| a.target.cmp(&b.target));
        }
        let max_len = entries.keys().map(Vec::len).max().unwrap_or(0);
        PhraseTable { entries, max_len }
    }

    /// Longest source phrase in the table.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn lookup(&self, source: &[String]) -> &[PhraseEntry] {
        self.entries.get(source).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], &PhraseEntry)> {
        self.entries
            .iter()
            .flat_map(|(s, list)| list.iter().map(move |e| (s.as_slice(), e)))
    }

    /// One `src ||| tgt ||| fwd ||| bwd` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (src, e) in self.iter() {
            writeln!(out, "{} ||| {} ||| {} ||| {}", src.join(" "), e.target.join(" "), e.fwd, e.bwd)
                .expect("write to string");
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            }
            let words = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            let src = words(fields[0]);
            if src.is_empty() {
                return Err(bad("empty source phrase".into()));
            }
            rows.push((src, words(fields[1]), num(fields[2])?, num(fields[3])?));
        }
        Ok(Self::from_entries(rows))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Phrase pairs consistent with one alignment: no link leaves the box
/// spanned by the pair, at least one link inside it, unaligned target words
/// at the edges may be absorbed. Unaligned null placeholders additionally
/// yield a pair with an empty target.
pub fn consistent_pairs(
    source: &[String],
    target: &[String],
    alignment: &Alignment,
    max_len: usize,
) -> Vec<(Vec<String>, Vec<String>)> {
    let mut out = Vec::new();
    let mut tgt_aligned = vec![false; target.len()];
    let mut src_aligned = vec![false; source.len()];
    for &(i, j) in alignment {
        src_aligned[i] = true;
        tgt_aligned[j] = true;
    }
    for s1 in 0..source.len() {
        for s2 in s1..source.len().min(s1 + max_len) {
            let mut t1 = usize::MAX;
            let mut t2 = 0;
            for &(i, j) in alignment {
                if (s1..=s2).contains(&i) {
                    t1 = t1.min(j);
                    t2 = t2.max(j);
                }
            }
            if t1 == usize::MAX || t2 - t1 + 1 > max_len {
                continue;
            }
            if alignment.iter().any(|&(i, j)| (t1..=t2).contains(&j) && !(s1..=s2).contains(&i)) {
                continue;
            }
            let mut lo = t1;
            while lo > 0 && !tgt_aligned[lo - 1] {
                lo -= 1;
            }
            let mut hi = t2;
            while hi + 1 < target.len() && !tgt_aligned[hi + 1] {
                hi += 1;
            }
            for ts in lo..=t1 {
                for te in t2..=hi {
                    if te - ts < max_len {
                        out.push((source[s1..=s2].to_vec(), target[ts..=te].to_vec()));
                    }
                }
            }
        }
    }
    for (i, tok) in source.iter().enumerate() {
        if !src_aligned[i] && is_null_token(tok) {
            out.push((vec![tok.clone()], Vec::new()));
        }
    }
    out
}

/// Extracts phrase pairs from every sentence pair and scores them by
/// relative frequency in both directions.
pub fn extract_phrases(
    pairs: &[(Vec<String>, Vec<String>)],
    alignments: &[Alignment],
    max_len: usize,
) -> Result<PhraseTable> {
    if pairs.len() != alignments.len() {
        return Err(Error::module("translation_training", "one alignment per sentence pair required"));
    }
    if max_len == 0 {
        return Err(Error::module("translation_training", "max phrase length must be positive"));
    }
    let mut joint: BTreeMap<(Vec<String>, Vec<String>), u64> = BTreeMap::new();
    for ((src, tgt), al) in pairs.iter().zip(alignments) {
        for pair in consistent_pairs(src, tgt, al, max_len) {
            *joint.entry(pair).or_insert(0) += 1;
        }
    }
    let mut src_count: BTreeMap<&[String], u64> = BTreeMap::new();
    let mut tgt_count: BTreeMap<&[String], u64> = BTreeMap::new();
    for ((s, t), &c) in &joint {
        *src_count.entry(s).or_insert(0) += c;
        *tgt_count.entry(t).or_insert(0) += c;
    }
    let rows: Vec<_> = joint
        .iter()
        .map(|((s, t), &c)| {
            let fwd = (c as f64 / src_count[s.as_slice()] as f64).ln();
            let bwd = (c as f64 / tgt_count[t.as_slice()] as f64).ln();
            (s.clone(), t.clone(), fwd, bwd)
        })
        .collect();
    Ok(PhraseTable::from_entries(rows))
}
