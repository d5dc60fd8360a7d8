//! IBM Model 1 lexical translation probabilities and Viterbi alignments.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::translation::source::is_null_token;

const MODULE: &str = "translation_training";

/// Source-side empty word every target word may align to.
pub const NULL_WORD: &str = "<null>";

/// `t(target | source)` for co-occurring word pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LexicalTable {
    probs: HashMap<(String, String), f64>,
}

impl LexicalTable {
    pub fn prob(&self, target: &str, source: &str) -> f64 {
        self.probs
            .get(&(source.to_owned(), target.to_owned()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Conditional distribution over targets for each source word, sorted.
    pub fn distributions(&self) -> BTreeMap<&str, BTreeMap<&str, f64>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
        for ((s, t), &p) in &self.probs {
            out.entry(s.as_str()).or_default().insert(t.as_str(), p);
        }
        out
    }
}

/// Runs EM from a uniform start. The source side of every pair gets an
/// extra [`NULL_WORD`].
pub fn train_ibm1(pairs: &[(Vec<String>, Vec<String>)], iters: usize) -> Result<LexicalTable> {
    train_ibm1_traced(pairs, iters, |_| {})
}

/// Like [`train_ibm1`], calling `each` with the table after every iteration.
pub fn train_ibm1_traced(
    pairs: &[(Vec<String>, Vec<String>)],
    iters: usize,
    mut each: impl FnMut(&LexicalTable),
) -> Result<LexicalTable> {
    if pairs.is_empty() {
        return Err(Error::module(MODULE, "empty parallel corpus"));
    }
    if pairs.iter().any(|(s, t)| s.is_empty() || t.is_empty()) {
        return Err(Error::module(MODULE, "parallel corpus contains an empty side"));
    }
    let src_vocab: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|(s, _)| s.iter().map(String::as_str))
        .chain(std::iter::once(NULL_WORD))
        .collect();
    let tgt_vocab: BTreeSet<&str> = pairs.iter().flat_map(|(_, t)| t.iter().map(String::as_str)).collect();
    let src_id: HashMap<&str, usize> = src_vocab.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let tgt_id: HashMap<&str, usize> = tgt_vocab.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let null = src_id[NULL_WORD];

    let corpus: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|(s, t)| {
            let mut src: Vec<usize> = s.iter().map(|w| src_id[w.as_str()]).collect();
            src.push(null);
            (src, t.iter().map(|w| tgt_id[w.as_str()]).collect())
        })
        .collect();

    let uniform = 1.0 / tgt_vocab.len() as f64;
    let mut t: HashMap<(usize, usize), f64> = HashMap::new();
    for (src, tgt) in &corpus {
        for &e in src {
            for &f in tgt {
                t.insert((e, f), uniform);
            }
        }
    }

    let src_words: Vec<&str> = src_vocab.iter().copied().collect();
    let tgt_words: Vec<&str> = tgt_vocab.iter().copied().collect();
    let to_table = |t: &HashMap<(usize, usize), f64>| LexicalTable {
        probs: t
            .iter()
            .map(|(&(e, f), &p)| ((src_words[e].to_owned(), tgt_words[f].to_owned()), p))
            .collect(),
    };

    for _ in 0..iters {
        let mut count: HashMap<(usize, usize), f64> = HashMap::with_capacity(t.len());
        let mut total = vec![0.0; src_vocab.len()];
        for (src, tgt) in &corpus {
            for &f in tgt {
                let z: f64 = src.iter().map(|&e| t[&(e, f)]).sum();
                for &e in src {
                    let c = t[&(e, f)] / z;
                    *count.entry((e, f)).or_insert(0.0) += c;
                    total[e] += c;
                }
            }
        }
        for (&(e, f), p) in t.iter_mut() {
            *p = count[&(e, f)] / total[e];
        }
        each(&to_table(&t));
    }
    Ok(to_table(&t))
}

/// Word alignment as `(source index, target index)` links.
pub type Alignment = BTreeSet<(usize, usize)>;

/// For each target word, the most probable source word (`None` for the
/// empty word). Real words win ties against the empty word, earlier words
/// against later ones.
pub fn viterbi_align(table: &LexicalTable, source: &[String], target: &[String]) -> Vec<Option<usize>> {
    target
        .iter()
        .map(|f| {
            let mut best: Option<usize> = None;
            let mut best_p = table.prob(f, NULL_WORD);
            for (i, e) in source.iter().enumerate() {
                let p = table.prob(f, e);
                if p > best_p || (best.is_none() && p == best_p && p > 0.0) {
                    best = Some(i);
                    best_p = p;
                }
            }
            best
        })
        .collect()
}

/// Links on which the Viterbi alignments of both directions agree. Null
/// placeholders on the source side are never linked, so their target-side
/// neighbours stay free to attach to adjacent phrases.
pub fn symmetrize(
    forward: &LexicalTable,
    reverse: &LexicalTable,
    source: &[String],
    target: &[String],
) -> Alignment {
    let fwd = viterbi_align(forward, source, target);
    viterbi_align(reverse, target, source)
        .into_iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| (i, j)))
        .filter(|&(i, j)| fwd[j] == Some(i) && !is_null_token(&source[i]))
        .collect()
}

/// Trains both directions and returns one symmetrized alignment per pair.
pub fn align_corpus(pairs: &[(Vec<String>, Vec<String>)], iters: usize) -> Result<Vec<Alignment>> {
    let forward = train_ibm1(pairs, iters)?;
    let flipped: Vec<(Vec<String>, Vec<String>)> = pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
    let reverse = train_ibm1(&flipped, iters)?;
    Ok(pairs.iter().map(|(s, t)| symmetrize(&forward, &reverse, s, t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn single_pair_is_certain() {
        let t = train_ibm1(&[(w("cut"), w("cut"))], 5).unwrap();
        assert_eq!(t.prob("cut", "cut"), 1.0);
    }

    #[test]
    fn distributions_normalize_every_iteration() {
        let pairs = [(w("a b"), w("x y")), (w("a"), w("x")), (w("b c"), w("y z z"))];
        let mut iterations = 0;
        train_ibm1_traced(&pairs, 5, |table| {
            iterations += 1;
            for (_, dist) in table.distributions() {
                let s: f64 = dist.values().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        })
        .unwrap();
        assert_eq!(iterations, 5);
    }

    #[test]
    fn cooccurrence_pulls_x_toward_a() {
        let t = train_ibm1(&[(w("a b"), w("x y")), (w("a"), w("x"))], 5).unwrap();
        assert!(t.prob("x", "a") > t.prob("y", "a"));
    }

    #[test]
    fn empty_inputs_error() {
        assert!(train_ibm1(&[], 5).is_err());
        assert!(train_ibm1(&[(w("a"), vec![])], 5).is_err());
    }

    #[test]
    fn identity_corpus_aligns_diagonally() {
        let pairs = [(w("a b"), w("a b")), (w("a c"), w("a c")), (w("b c"), w("b c"))];
        let al = align_corpus(&pairs, 10).unwrap();
        assert_eq!(al[0], Alignment::from([(0, 0), (1, 1)]));
    }
}
