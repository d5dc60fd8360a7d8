//! Monotone phrase-based beam decoding of word lattices.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::WordLattice;
use crate::translation::lm::NgramLm;
use crate::translation::phrases::PhraseTable;
use crate::translation::source::is_null_token;

const MODULE: &str = "lattice_decoder";

/// Fallback log-probability of translating an uncovered null token to nothing.
pub const NULL_FALLBACK: f64 = -std::f64::consts::LN_2;
/// Fallback log-probability of copying an uncovered word to the output.
pub const OOV_FALLBACK: f64 = -std::f64::consts::LN_10;

/// Log-linear feature weights. `distortion` is carried for file
/// compatibility but has no effect under monotone decoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderWeights {
    pub tm_fwd: f64,
    pub tm_bwd: f64,
    pub lm: f64,
    pub word_penalty: f64,
    pub lattice: f64,
    pub distortion: f64,
}

impl Default for DecoderWeights {
    fn default() -> Self {
        DecoderWeights {
            tm_fwd: 1.0,
            tm_bwd: 1.0,
            lm: 1.0,
            word_penalty: 0.0,
            lattice: 1.0,
            distortion: 0.0,
        }
    }
}

impl DecoderWeights {
    pub const NAMES: [&'static str; 6] = ["tm_fwd", "tm_bwd", "lm", "word_penalty", "lattice", "distortion"];

    pub fn zeros() -> Self {
        Self::from_array([0.0; 6])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.tm_fwd, self.tm_bwd, self.lm, self.word_penalty, self.lattice, self.distortion]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        DecoderWeights {
            tm_fwd: a[0],
            tm_bwd: a[1],
            lm: a[2],
            word_penalty: a[3],
            lattice: a[4],
            distortion: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|w| w.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("weights serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: Self = serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        if !w.is_finite() {
            return Err(Error::artifact(path, "non-finite weight"));
        }
        Ok(w)
    }
}

/// Feature totals of one derivation, in [`DecoderWeights::NAMES`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Features {
    pub tm_fwd: f64,
    pub tm_bwd: f64,
    pub lm: f64,
    pub word_penalty: f64,
    pub lattice: f64,
    pub distortion: f64,
}

impl Features {
    pub fn score(&self, w: &DecoderWeights) -> f64 {
        w.tm_fwd * self.tm_fwd
            + w.tm_bwd * self.tm_bwd
            + w.lm * self.lm
            + w.word_penalty * self.word_penalty
            + w.lattice * self.lattice
            + w.distortion * self.distortion
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub sentence: Vec<String>,
    pub score: f64,
    pub features: Features,
    /// Lattice words along the chosen path.
    pub source: Vec<String>,
}

/// One way to cover a stretch of the lattice with a phrase.
#[derive(Clone, Debug)]
struct Expansion {
    to: usize,
    source: Vec<String>,
    lattice: f64,
    fwd: f64,
    bwd: f64,
    /// Indices into `Prepared::words`.
    target: Vec<u32>,
}

/// Weight-independent expansion table for one lattice, reusable across
/// decodes with different weights.
#[derive(Clone, Debug)]
pub struct Prepared {
    lattice_end: usize,
    num_nodes: usize,
    options: Vec<Vec<Expansion>>,
    /// Target words in sorted order, so id order is string order.
    words: Vec<String>,
    lm_ids: Vec<u32>,
}

/// Phrase options for every source phrase spelled by a lattice path of at
/// most the table's phrase length, with the null and identity fallbacks
/// for single words the table cannot translate.
pub fn prepare(lattice: &WordLattice, pt: &PhraseTable, lm: &NgramLm) -> Prepared {
    let max_len = pt.max_len().max(1);
    let mut raw: Vec<Vec<(usize, Vec<String>, f64, f64, f64, Vec<String>)>> = vec![Vec::new(); lattice.num_nodes()];
    for (u, slot) in raw.iter_mut().enumerate() {
        let mut stack: Vec<(usize, Vec<String>, f64)> = vec![(u, Vec::new(), 0.0)];
        while let Some((node, words, conf)) = stack.pop() {
            for i in lattice.outgoing(node) {
                let e = &lattice.edges()[i];
                let mut src = words.clone();
                src.push(e.word.clone());
                let c = conf + e.log_conf;
                let entries = pt.lookup(&src);
                for entry in entries {
                    slot.push((e.to, src.clone(), c, entry.fwd, entry.bwd, entry.target.clone()));
                }
                if entries.is_empty() && src.len() == 1 {
                    if is_null_token(&e.word) {
                        slot.push((e.to, src.clone(), c, NULL_FALLBACK, NULL_FALLBACK, Vec::new()));
                    } else {
                        slot.push((e.to, src.clone(), c, OOV_FALLBACK, OOV_FALLBACK, src.clone()));
                    }
                }
                if src.len() < max_len {
                    stack.push((e.to, src, c));
                }
            }
        }
    }
    let mut words: Vec<String> = raw.iter().flatten().flat_map(|o| o.5.iter().cloned()).collect();
    words.sort();
    words.dedup();
    let index: HashMap<&str, u32> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
    let options = raw
        .iter()
        .map(|slot| {
            slot.iter()
                .map(|(to, source, lattice, fwd, bwd, target)| Expansion {
                    to: *to,
                    source: source.clone(),
                    lattice: *lattice,
                    fwd: *fwd,
                    bwd: *bwd,
                    target: target.iter().map(|w| index[w.as_str()]).collect(),
                })
                .collect()
        })
        .collect();
    let lm_ids = words.iter().map(|w| lm.id(w)).collect();
    Prepared {
        lattice_end: lattice.end(),
        num_nodes: lattice.num_nodes(),
        options,
        words,
        lm_ids,
    }
}

#[derive(Clone, Debug)]
struct Hyp {
    score: f64,
    features: Features,
    /// Last `order - 1` LM ids.
    ctx: Vec<u32>,
    output: Vec<u32>,
    source: Vec<String>,
}

/// Better score first, then the smaller output.
fn better(a: &Hyp, b: &Hyp) -> bool {
    a.score > b.score || (a.score == b.score && a.output < b.output)
}

/// Decodes with a beam per lattice position (`None` keeps every
/// hypothesis). Hypotheses sharing position and LM context recombine.
pub fn decode(
    lattice: &WordLattice,
    pt: &PhraseTable,
    lm: &NgramLm,
    w: &DecoderWeights,
    beam: Option<usize>,
) -> Result<Decoded> {
    decode_prepared(&prepare(lattice, pt, lm), lm, w, beam)
}

pub fn decode_prepared(p: &Prepared, lm: &NgramLm, w: &DecoderWeights, beam: Option<usize>) -> Result<Decoded> {
    let keep = lm.order().saturating_sub(1);
    let mut stacks: Vec<HashMap<Vec<u32>, Hyp>> = vec![HashMap::new(); p.num_nodes];
    let start_ctx: Vec<u32> = if keep > 0 { vec![lm.bos()] } else { Vec::new() };
    stacks[0].insert(
        start_ctx.clone(),
        Hyp {
            score: 0.0,
            features: Features::default(),
            ctx: start_ctx,
            output: Vec::new(),
            source: Vec::new(),
        },
    );
    let mut lm_cache: HashMap<(Vec<u32>, u32), f64> = HashMap::new();
    let mut lm_score = |ctx: &[u32], word: u32| -> f64 {
        *lm_cache
            .entry((ctx.to_vec(), word))
            .or_insert_with(|| lm.ln_prob(ctx, word))
    };
    for node in 0..p.num_nodes {
        let mut hyps: Vec<Hyp> = std::mem::take(&mut stacks[node]).into_values().collect();
        hyps.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.output.cmp(&b.output)));
        if let Some(b) = beam {
            hyps.truncate(b.max(1));
        }
        if node == p.lattice_end {
            let mut best: Option<Hyp> = None;
            for mut h in hyps {
                let lp = lm_score(&h.ctx, lm.eos());
                h.features.lm += lp;
                h.score = h.features.score(w);
                if best.as_ref().is_none_or(|b| better(&h, b)) {
                    best = Some(h);
                }
            }
            let h = best.ok_or_else(|| Error::module(MODULE, "no complete hypothesis"))?;
            return Ok(Decoded {
                sentence: h.output.iter().map(|&i| p.words[i as usize].clone()).collect(),
                score: h.score,
                features: h.features,
                source: h.source,
            });
        }
        for h in &hyps {
            for opt in &p.options[node] {
                let mut f = h.features;
                f.tm_fwd += opt.fwd;
                f.tm_bwd += opt.bwd;
                f.lattice += opt.lattice;
                f.word_penalty += opt.target.len() as f64;
                let mut ctx = h.ctx.clone();
                for &t in &opt.target {
                    let id = p.lm_ids[t as usize];
                    f.lm += lm_score(&ctx, id);
                    ctx.push(id);
                    if ctx.len() > keep {
                        ctx.remove(0);
                    }
                }
                let mut output = h.output.clone();
                output.extend_from_slice(&opt.target);
                let cand = Hyp {
                    score: f.score(w),
                    features: f,
                    ctx: ctx.clone(),
                    output,
                    source: h.source.iter().chain(&opt.source).cloned().collect(),
                };
                let slot = stacks[opt.to].entry(ctx);
                match slot {
                    std::collections::hash_map::Entry::Occupied(mut o) => {
                        if better(&cand, o.get()) {
                            o.insert(cand);
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(cand);
                    }
                }
            }
        }
    }
    Err(Error::module(MODULE, "no complete hypothesis"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeEdge;
    use crate::translation::lm::estimate_lm;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn chain(words: &str) -> WordLattice {
        let edges = w(words)
            .into_iter()
            .enumerate()
            .map(|(i, word)| LatticeEdge { from: i, to: i + 1, word, log_conf: 0.0 })
            .collect::<Vec<_>>();
        WordLattice::new(edges.len() + 1, edges).unwrap()
    }

    #[test]
    fn forced_derivation_concatenates_phrases() {
        let pt = PhraseTable::from_entries([
            (w("wash"), w("washed"), 0.0, 0.0),
            (w("null1"), vec![], 0.0, 0.0),
            (w("carrot"), w("the carrot"), 0.0, 0.0),
        ]);
        let lm = estimate_lm(&[w("x")], 1).unwrap();
        let weights = DecoderWeights { lm: 0.0, ..DecoderWeights::default() };
        let d = decode(&chain("wash null1 carrot"), &pt, &lm, &weights, Some(100)).unwrap();
        assert_eq!(d.sentence, w("washed the carrot"));
        assert_eq!(d.source, w("wash null1 carrot"));
        assert_eq!(d.features.word_penalty, 3.0);
    }

    #[test]
    fn fallbacks_keep_decoding_total() {
        let pt = PhraseTable::from_entries([(w("cut"), w("cut"), 0.0, 0.0)]);
        let lm = estimate_lm(&[w("cut")], 2).unwrap();
        let d = decode(&chain("cut null2 zucchini"), &pt, &lm, &DecoderWeights::default(), Some(10)).unwrap();
        assert_eq!(d.sentence, w("cut zucchini"));
        assert!((d.features.tm_fwd - (NULL_FALLBACK + OOV_FALLBACK)).abs() < 1e-15);
        assert!((NULL_FALLBACK - 0.5f64.ln()).abs() < 1e-15);
        assert!((OOV_FALLBACK - 0.1f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn reported_score_matches_features() {
        let pt = PhraseTable::from_entries([
            (w("a"), w("x"), -0.3, -0.1),
            (w("a"), w("y"), -1.2, -0.2),
            (w("a b"), w("x z"), -0.5, -0.7),
            (w("b"), w("z"), 0.0, -0.4),
        ]);
        let lm = estimate_lm(&[w("x z"), w("y z")], 3).unwrap();
        let weights = DecoderWeights { word_penalty: -0.5, ..DecoderWeights::default() };
        let d = decode(&chain("a b"), &pt, &lm, &weights, None).unwrap();
        assert!((d.score - d.features.score(&weights)).abs() < 1e-12);
        let lm_direct = lm.logprob(&d.sentence);
        assert!((d.features.lm - lm_direct).abs() < 1e-12);
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let weights = DecoderWeights { lm: 0.1 + 0.2, word_penalty: -1.0 / 3.0, ..DecoderWeights::default() };
        weights.save(&path).unwrap();
        assert_eq!(DecoderWeights::load(&path).unwrap(), weights);
    }
}
