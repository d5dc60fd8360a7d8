//! Corpus-level BLEU@4 with clipped n-gram counts and the closest-reference
//! brevity penalty. No smoothing: any zero precision gives a zero score.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

const MAX_N: usize = 4;
const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];

/// Lowercases, splits on whitespace and detaches trailing punctuation
/// (`"board."` → `board .`); each punctuation character is its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let core = word.trim_end_matches(PUNCT);
        if !core.is_empty() {
            out.push(core.to_owned());
        }
        out.extend(word[core.len()..].chars().map(String::from));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Description,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    pub precisions: [f64; MAX_N],
    pub matches: [u64; MAX_N],
    pub totals: [u64; MAX_N],
    pub brevity_penalty: f64,
    /// In `[0, 100]`.
    pub score: f64,
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuReport {
    pub fn summary(&self) -> String {
        format!(
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, hyp_len={}, ref_len={})",
            self.score,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            self.candidate_len,
            self.reference_len
        )
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Scores `candidates[i]` against the alternatives in `references[i]`.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<BleuReport> {
    if candidates.is_empty() {
        return Err(Error::module("evaluation", "empty candidate set"));
    }
    if candidates.len() != references.len() {
        return Err(Error::module(
            "evaluation",
            format!("{} candidates but {} reference sets", candidates.len(), references.len()),
        ));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(Error::module("evaluation", format!("item {i} has no reference")));
    }
    let mut matches = [0u64; MAX_N];
    let mut totals = [0u64; MAX_N];
    let mut c_len = 0u64;
    let mut r_len = 0u64;
    for (cand, refs) in candidates.iter().zip(references) {
        c_len += cand.len() as u64;
        // Closest reference length, the shorter one on ties.
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .expect("nonempty references");
        r_len += closest as u64;
        for n in 1..=MAX_N {
            let cand_counts = ngram_counts(cand, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let m = max_ref.entry(g).or_insert(0);
                    *m = (*m).max(c);
                }
            }
            for (g, c) in cand_counts {
                matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
            }
            totals[n - 1] += cand.len().saturating_sub(n - 1) as u64;
        }
    }
    let mut precisions = [0.0; MAX_N];
    for n in 0..MAX_N {
        precisions[n] = if totals[n] == 0 { 0.0 } else { matches[n] as f64 / totals[n] as f64 };
    }
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_N as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        precisions,
        matches,
        totals,
        brevity_penalty,
        score,
        candidate_len: c_len,
        reference_len: r_len,
    })
}

/// Generated and reference text of one video, tokenized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VideoText {
    pub candidate: Vec<Vec<String>>,
    /// Alternatives for each generated sentence; needed for sentence
    /// granularity only.
    pub sentence_refs: Vec<Vec<Vec<String>>>,
    /// Reference descriptions, each a list of sentences.
    pub descriptions: Vec<Vec<Vec<String>>>,
}

/// Sentence granularity scores every generated sentence against its own
/// references; description granularity concatenates each side per video.
pub fn bleu_at(granularity: Granularity, videos: &[VideoText]) -> Result<BleuReport> {
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for (i, v) in videos.iter().enumerate() {
        match granularity {
            Granularity::Sentence => {
                if v.sentence_refs.len() != v.candidate.len() {
                    return Err(Error::module(
                        "evaluation",
                        format!("video {i}: {} sentences but {} reference sets", v.candidate.len(), v.sentence_refs.len()),
                    ));
                }
                cands.extend(v.candidate.iter().cloned());
                refs.extend(v.sentence_refs.iter().cloned());
            }
            Granularity::Description => {
                cands.push(v.candidate.concat());
                refs.push(v.descriptions.iter().map(|d| d.concat()).collect());
            }
        }
    }
    bleu(&cands, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(tokenize("A woman cut the Carrot."), t("a woman cut the carrot ."));
        assert_eq!(tokenize("Next, she ate!?"), t("next , she ate ! ?"));
        assert_eq!(tokenize("... ok"), t(". . . ok"));
    }

    #[test]
    fn perfect_match() {
        let c = t("the person cut the carrot");
        assert_eq!(bleu(std::slice::from_ref(&c), &[vec![c.clone()]]).unwrap().score, 100.0);
    }

    #[test]
    fn clipping_forces_zero() {
        let r = bleu(&[t("the the the the the")], &[vec![t("the cat sat")]]).unwrap();
        assert_eq!(r.matches[0], 1);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn hand_counted_example() {
        let r = bleu(&[t("the cat sat on the mat .")], &[vec![t("the cat sat on a mat .")]]).unwrap();
        // Trigrams "the cat sat", "cat sat on"; 4-gram "the cat sat on".
        assert_eq!(r.matches, [6, 4, 2, 1]);
        assert_eq!(r.totals, [7, 6, 5, 4]);
        assert_eq!(r.brevity_penalty, 1.0);
        let expected = 100.0 * (6.0 / 7.0 * 4.0 / 6.0 * 2.0 / 5.0 * 1.0 / 4.0f64).powf(0.25);
        assert!((r.score - expected).abs() < 1e-9);
        assert!((r.score - 48.89).abs() < 0.01);
    }

    #[test]
    fn closest_reference_sets_brevity() {
        let r = bleu(
            &[t("a b c d e")],
            &[vec![t("a b c d e f g h i j"), t("a b c d e f")]],
        )
        .unwrap();
        assert_eq!(r.reference_len, 6);
        assert!((r.brevity_penalty - (1.0 - 6.0 / 5.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn description_concatenates() {
        let v = VideoText {
            candidate: vec![t("she cut the carrot ."), t("she ate it .")],
            sentence_refs: vec![vec![t("she ate it .")], vec![t("she cut the carrot .")]],
            descriptions: vec![vec![t("she cut the carrot ."), t("she ate it .")]],
        };
        assert_eq!(bleu_at(Granularity::Description, std::slice::from_ref(&v)).unwrap().score, 100.0);
        assert_eq!(bleu_at(Granularity::Sentence, &[v]).unwrap().score, 0.0);
    }

    #[test]
    fn errors() {
        assert!(bleu(&[], &[]).is_err());
        assert!(bleu(&[t("a")], &[]).is_err());
        assert!(bleu(&[t("a")], &[vec![]]).is_err());
    }
}
