//! Witten-Bell smoothed n-gram language model, stored in ARPA backoff form.
//!
//! The interpolated estimates are converted to explicit probabilities for
//! every observed n-gram plus backoff weights for every observed history, so
//! querying the backoff form reproduces the interpolated model exactly.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// ARPA convention for the never-predicted `<s>`.
const NEVER: f64 = -99.0;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    /// log10 probability
    logp: f64,
    /// log10 backoff weight, 0 when absent
    backoff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramLm {
    order: usize,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    entries: HashMap<Vec<u32>, Entry>,
}

type Counts = BTreeMap<Vec<String>, u64>;

struct Estimator {
    counts: Vec<Counts>,
    /// history → (total continuation count, distinct continuations)
    hist: BTreeMap<Vec<String>, (u64, u64)>,
    tokens: u64,
    types: u64,
    vocab_size: usize,
}

impl Estimator {
    fn prob(&self, h: &[String], w: &str) -> f64 {
        let key = |h: &[String]| {
            let mut k = h.to_vec();
            k.push(w.to_owned());
            k
        };
        if h.is_empty() {
            let c = self.counts[0].get(&key(h)).copied().unwrap_or(0) as f64;
            let t = self.types as f64;
            return (c + t / self.vocab_size as f64) / (self.tokens as f64 + t);
        }
        let lower = self.prob(&h[1..], w);
        match self.hist.get(h) {
            None => lower,
            Some(&(total, distinct)) => {
                let c = self.counts[h.len()].get(&key(h)).copied().unwrap_or(0) as f64;
                (c + distinct as f64 * lower) / (total + distinct) as f64
            }
        }
    }
}

/// Estimates an interpolated Witten-Bell model of the given order. Each
/// sentence is padded with one `<s>` and one `</s>`.
pub fn estimate_lm(sentences: &[Vec<String>], order: usize) -> Result<NgramLm> {
    if order < 1 {
        return Err(Error::module("translation_training", "LM order must be at least 1"));
    }
    if sentences.is_empty() {
        return Err(Error::module("translation_training", "empty LM corpus"));
    }
    let mut counts: Vec<Counts> = vec![Counts::new(); order];
    for s in sentences {
        let padded: Vec<String> = std::iter::once(BOS.to_owned())
            .chain(s.iter().cloned())
            .chain(std::iter::once(EOS.to_owned()))
            .collect();
        for end in 1..padded.len() {
            for k in 1..=order.min(end + 1) {
                *counts[k - 1].entry(padded[end + 1 - k..=end].to_vec()).or_insert(0) += 1;
            }
        }
    }
    let mut hist: BTreeMap<Vec<String>, (u64, u64)> = BTreeMap::new();
    for level in &counts[1..] {
        for (g, &c) in level {
            let e = hist.entry(g[..g.len() - 1].to_vec()).or_insert((0, 0));
            e.0 += c;
            e.1 += 1;
        }
    }
    let mut words: Vec<String> = counts[0].keys().map(|g| g[0].clone()).collect();
    if !words.iter().any(|w| w == UNK) {
        words.push(UNK.to_owned());
    }
    let est = Estimator {
        tokens: counts[0].values().sum(),
        types: counts[0].len() as u64,
        vocab_size: words.len(),
        counts,
        hist,
    };

    let mut table: BTreeMap<Vec<String>, Entry> = BTreeMap::new();
    for w in &words {
        let logp = est.prob(&[], w).log10();
        table.insert(vec![w.clone()], Entry { logp, backoff: 0.0 });
    }
    table.insert(vec![BOS.to_owned()], Entry { logp: NEVER, backoff: 0.0 });
    for level in &est.counts[1..] {
        for g in level.keys() {
            let (h, w) = g.split_at(g.len() - 1);
            let logp = est.prob(h, &w[0]).log10();
            table.insert(g.clone(), Entry { logp, backoff: 0.0 });
        }
    }
    // Backoff weight of history h: leftover mass of h divided by the mass
    // the shorter history assigns to words unseen after h.
    let mut continuations: BTreeMap<&[String], Vec<&str>> = BTreeMap::new();
    for level in &est.counts[1..] {
        for g in level.keys() {
            continuations.entry(&g[..g.len() - 1]).or_default().push(&g[g.len() - 1]);
        }
    }
    for (h, seen) in continuations {
        let here: f64 = seen.iter().map(|w| est.prob(h, w)).sum();
        let lower: f64 = seen.iter().map(|w| est.prob(&h[1..], w)).sum();
        let alpha = (1.0 - here) / (1.0 - lower);
        table.get_mut(h).expect("every history is itself an n-gram").backoff = alpha.log10();
    }
    Ok(NgramLm::from_table(order, table))
}

impl NgramLm {
    fn from_table(order: usize, table: BTreeMap<Vec<String>, Entry>) -> Self {
        let mut vocab: Vec<String> = table.keys().filter(|g| g.len() == 1).map(|g| g[0].clone()).collect();
        vocab.sort();
        let ids: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let entries = table
            .into_iter()
            .map(|(g, e)| (g.iter().map(|w| ids[w]).collect(), e))
            .collect();
        NgramLm {
            order,
            vocab,
            ids,
            entries,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Word id; unknown words map to `<unk>`.
    pub fn id(&self, word: &str) -> u32 {
        self.ids.get(word).or_else(|| self.ids.get(UNK)).copied().expect("vocabulary contains <unk>")
    }

    pub fn word(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    pub fn bos(&self) -> u32 {
        self.ids[BOS]
    }

    pub fn eos(&self) -> u32 {
        self.ids[EOS]
    }

    /// Words that can be predicted (everything except `<s>`).
    pub fn predictable(&self) -> impl Iterator<Item = u32> + '_ {
        let bos = self.bos();
        (0..self.vocab.len() as u32).filter(move |&i| i != bos)
    }

    /// Natural-log probability of `w` after `ctx` (oldest word first).
    /// Only the last `order - 1` context words are used.
    pub fn ln_prob(&self, ctx: &[u32], w: u32) -> f64 {
        let ctx = &ctx[ctx.len().saturating_sub(self.order - 1)..];
        let mut backoff = 0.0;
        let mut key = Vec::with_capacity(ctx.len() + 1);
        for start in 0..=ctx.len() {
            key.clear();
            key.extend_from_slice(&ctx[start..]);
            key.push(w);
            if let Some(e) = self.entries.get(&key) {
                return (backoff + e.logp) * std::f64::consts::LN_10;
            }
            if let Some(e) = self.entries.get(&ctx[start..]) {
                backoff += e.backoff;
            }
        }
        unreachable!("every word id has a unigram entry")
    }

    /// Natural-log probability of a whole sentence including `</s>`.
    pub fn logprob(&self, sentence: &[String]) -> f64 {
        let mut ctx = vec![self.bos()];
        let mut total = 0.0;
        for w in sentence.iter().map(|w| self.id(w)).chain(std::iter::once(self.eos())) {
            total += self.ln_prob(&ctx, w);
            ctx.push(w);
        }
        total
    }

    pub fn to_arpa(&self) -> String {
        let mut grams: Vec<(Vec<&str>, Entry)> = self
            .entries
            .iter()
            .map(|(g, e)| (g.iter().map(|&i| self.word(i)).collect(), *e))
            .collect();
        grams.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        let mut out = String::from("\n\\data\\\n");
        for n in 1..=self.order {
            let count = grams.iter().filter(|(g, _)| g.len() == n).count();
            writeln!(out, "ngram {n}={count}").unwrap();
        }
        for n in 1..=self.order {
            writeln!(out, "\n\\{n}-grams:").unwrap();
            for (g, e) in grams.iter().filter(|(g, _)| g.len() == n) {
                write!(out, "{}\t{}", e.logp, g.join(" ")).unwrap();
                if e.backoff != 0.0 {
                    write!(out, "\t{}", e.backoff).unwrap();
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut declared: BTreeMap<usize, usize> = BTreeMap::new();
        let mut section: Option<usize> = None;
        let mut table: BTreeMap<Vec<String>, Entry> = BTreeMap::new();
        let mut ended = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || ended {
                continue;
            }
            if line == "\\data\\" {
                section = Some(0);
            } else if line == "\\end\\" {
                ended = true;
            } else if let Some(n) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                section = Some(n.parse().map_err(|_| bad(lineno, format!("bad section {line:?}")))?);
            } else if section == Some(0) {
                let (n, c) = line
                    .strip_prefix("ngram ")
                    .and_then(|r| r.split_once('='))
                    .ok_or_else(|| bad(lineno, format!("expected ngram count, got {line:?}")))?;
                let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(lineno, e.to_string()));
                declared.insert(parse(n)?, parse(c)?);
            } else if let Some(n) = section {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != n + 1 && fields.len() != n + 2 {
                    return Err(bad(lineno, format!("expected {n}-gram entry, got {line:?}")));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|e| bad(lineno, format!("{s:?}: {e}")));
                let logp = num(fields[0])?;
                let backoff = if fields.len() == n + 2 { num(fields[n + 1])? } else { 0.0 };
                let gram = fields[1..=n].iter().map(|w| w.to_string()).collect();
                table.insert(gram, Entry { logp, backoff });
            } else {
                return Err(bad(lineno, format!("unexpected line {line:?}")));
            }
        }
        let order = declared.keys().copied().max().unwrap_or(0);
        if order == 0 || !ended {
            return Err(Error::artifact(origin, "incomplete ARPA file"));
        }
        for (&n, &c) in &declared {
            let found = table.keys().filter(|g| g.len() == n).count();
            if found != c {
                return Err(Error::artifact(origin, format!("{n}-gram count {found} does not match header {c}")));
            }
        }
        for w in [BOS, EOS, UNK] {
            if !table.contains_key(&vec![w.to_owned()]) {
                return Err(Error::artifact(origin, format!("missing unigram {w}")));
            }
        }
        Ok(Self::from_table(order, table))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_arpa()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_arpa(&text, path)
    }
}

/// Natural-log probability of a sentence including end-of-sentence.
pub fn lm_logprob(lm: &NgramLm, sentence: &[String]) -> f64 {
    lm.logprob(sentence)
}
