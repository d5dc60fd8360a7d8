#![allow(dead_code)]

use std::borrow::Cow;

use latticedesc::crf::{pairs, CrfModel, Matrix, UnaryMode};
use latticedesc::data::{Dataset, FrameSpan, SegmentObservation, SemanticRepresentation, Split, VideoRecord};
use latticedesc::decoder::DecoderWeights;
use latticedesc::lattice::{LatticeEdge, WordLattice};
use latticedesc::schema::{NodeSpec, Schema, EMPTY};
use latticedesc::translation::{estimate_lm, NgramLm, PhraseTable};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Five SR variables plus a topic, 2..=`max_states` states each; unaries
/// uniform in [-1, 1], pairwise uniform in [-coupling, coupling].
pub fn random_potentials(rng: &mut ChaCha8Rng, max_states: usize, coupling: f64) -> latticedesc::inference::Potentials<'static> {
    let card: Vec<usize> = (0..6).map(|_| rng.gen_range(2..=max_states)).collect();
    let unary = card.iter().map(|&c| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let pairwise = pairs(card.len())
        .map(|(a, b)| {
            let mut m = Matrix::zeros(card[a], card[b]);
            m.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-coupling..coupling));
            m
        })
        .collect();
    latticedesc::inference::Potentials::new(unary, Cow::Owned(pairwise))
}

/// Like [`random_potentials`] but only the edges of a random spanning tree
/// carry (strong) pairwise weights.
pub fn tree_potentials(rng: &mut ChaCha8Rng, max_states: usize, coupling: f64) -> latticedesc::inference::Potentials<'static> {
    let v = 6;
    let card: Vec<usize> = (0..v).map(|_| rng.gen_range(2..=max_states)).collect();
    let unary = card.iter().map(|&c| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(rng);
    let mut tree = Vec::new();
    for i in 1..v {
        let parent = order[rng.gen_range(0..i)];
        tree.push((parent.min(order[i]), parent.max(order[i])));
    }
    let pairwise = pairs(v)
        .map(|(a, b)| {
            let mut m = Matrix::zeros(card[a], card[b]);
            if tree.contains(&(a, b)) {
                m.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-coupling..coupling));
            }
            m
        })
        .collect();
    latticedesc::inference::Potentials::new(unary, Cow::Owned(pairwise))
}

const SOURCE_VOCAB: &[&str] = &["cut", "off", "carrot", "knife", "null1", "null2", "board"];
const TARGET_VOCAB: &[&str] = &["the", "person", "cut", "off", "carrot", "a", "knife", "board"];

/// Sections of one to three alternatives; an alternative is one or two
/// words, and section confidences sum to one.
pub fn random_lattice(rng: &mut ChaCha8Rng) -> WordLattice {
    let sections = rng.gen_range(2..=4);
    let mut edges = Vec::new();
    let mut start = 0;
    let mut next = 1;
    for _ in 0..sections {
        let k = rng.gen_range(1..=3);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut pending = Vec::new();
        for p in raw {
            let word = SOURCE_VOCAB.choose(rng).unwrap().to_string();
            if rng.gen_bool(0.3) {
                let mid = next;
                next += 1;
                edges.push(LatticeEdge { from: start, to: mid, word, log_conf: (p / total).ln() });
                pending.push((mid, SOURCE_VOCAB.choose(rng).unwrap().to_string(), 0.0));
            } else {
                pending.push((start, word, (p / total).ln()));
            }
        }
        let end = next;
        next += 1;
        for (from, word, log_conf) in pending {
            edges.push(LatticeEdge { from, to: end, word, log_conf });
        }
        start = end;
    }
    WordLattice::new(next, edges).expect("valid lattice")
}

fn random_target(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| TARGET_VOCAB.choose(rng).unwrap().to_string()).collect()
}

/// Entries for most single source words (some are left to the fallbacks)
/// and a few two-word phrases, with one or two targets each.
pub fn random_phrase_table(rng: &mut ChaCha8Rng) -> PhraseTable {
    let mut rows = Vec::new();
    let mut sources: Vec<Vec<String>> = SOURCE_VOCAB
        .iter()
        .filter(|_| rng.gen_bool(0.7))
        .map(|w| vec![w.to_string()])
        .collect();
    for _ in 0..3 {
        sources.push(vec![
            SOURCE_VOCAB.choose(rng).unwrap().to_string(),
            SOURCE_VOCAB.choose(rng).unwrap().to_string(),
        ]);
    }
    sources.sort();
    sources.dedup();
    for src in sources {
        for _ in 0..rng.gen_range(1..=2) {
            let fwd = rng.gen_range(-3.0..0.0);
            let bwd = rng.gen_range(-3.0..0.0);
            rows.push((src.clone(), random_target(rng, 3), fwd, bwd));
        }
    }
    PhraseTable::from_entries(rows)
}

pub fn random_lm(rng: &mut ChaCha8Rng) -> NgramLm {
    let corpus: Vec<Vec<String>> = (0..10)
        .map(|_| {
            let mut s = random_target(rng, 6);
            if s.is_empty() {
                s.push("the".into());
            }
            s
        })
        .collect();
    estimate_lm(&corpus, 3).expect("nonempty corpus")
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> DecoderWeights {
    DecoderWeights {
        tm_fwd: rng.gen_range(-1.0..2.0),
        tm_bwd: rng.gen_range(-1.0..2.0),
        lm: rng.gen_range(-1.0..2.0),
        word_penalty: rng.gen_range(-1.0..1.0),
        lattice: rng.gen_range(-1.0..2.0),
        distortion: 0.0,
    }
}

fn is_null(w: &str) -> bool {
    w.strip_prefix("null").is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Phrase options for a source span: table entries, else the null or
/// identity fallback for a single word.
fn options(pt: &PhraseTable, src: &[String]) -> Vec<(Vec<String>, f64, f64)> {
    let entries = pt.lookup(src);
    if !entries.is_empty() {
        return entries.iter().map(|e| (e.target.clone(), e.fwd, e.bwd)).collect();
    }
    if src.len() == 1 {
        return if is_null(&src[0]) {
            vec![(Vec::new(), 0.5f64.ln(), 0.5f64.ln())]
        } else {
            vec![(src.to_vec(), 0.1f64.ln(), 0.1f64.ln())]
        };
    }
    Vec::new()
}

/// Best model score over every path, every segmentation of it into table
/// phrases, and every choice of target per phrase; also the number of
/// (path, segmentation) pairs.
pub fn brute_force_decode(lattice: &WordLattice, pt: &PhraseTable, lm: &NgramLm, w: &DecoderWeights) -> (f64, usize) {
    let max_len = pt.max_len().max(1);
    let mut best = f64::NEG_INFINITY;
    let mut segmentations = 0;
    for path in lattice.paths() {
        let words: Vec<String> = path.iter().map(|&e| lattice.edges()[e].word.clone()).collect();
        let conf: f64 = path.iter().map(|&e| lattice.edges()[e].log_conf).sum();
        let mut stack: Vec<(usize, Vec<String>, f64, f64, bool)> = vec![(0, Vec::new(), 0.0, 0.0, true)];
        while let Some((i, out, fwd, bwd, fresh)) = stack.pop() {
            if i == words.len() {
                if fresh {
                    segmentations += 1;
                }
                let s = w.tm_fwd * fwd
                    + w.tm_bwd * bwd
                    + w.lm * lm.logprob(&out)
                    + w.word_penalty * out.len() as f64
                    + w.lattice * conf;
                best = best.max(s);
                continue;
            }
            for j in i + 1..=(i + max_len).min(words.len()) {
                for (k, (t, f, b)) in options(pt, &words[i..j]).into_iter().enumerate() {
                    let mut o = out.clone();
                    o.extend(t);
                    stack.push((j, o, fwd + f, bwd + b, fresh && k == 0));
                }
            }
        }
    }
    (best, segmentations)
}

fn node(name: &str, n: usize) -> NodeSpec {
    NodeSpec {
        name: name.into(),
        states: std::iter::once(EMPTY.to_string())
            .chain((1..n).map(|i| format!("{name}{i}")))
            .collect(),
    }
}

/// A small model with random weights and a few labelled segments.
pub fn gradient_problem(rng: &mut ChaCha8Rng, mode: UnaryMode) -> (CrfModel, Dataset) {
    let names = ["activity", "tool", "object", "source", "target"];
    let nodes = names.iter().map(|n| node(n, rng.gen_range(2..=3))).collect();
    let dim = 3;
    let schema = Schema::new(nodes, vec!["t1".into(), "t2".into()], Some(dim)).expect("valid schema");
    let mut model = CrfModel::new(schema.clone(), mode, dim).expect("valid model");
    let p: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    model.set_params(&p);

    let mut d = Dataset::new(schema.clone(), Split::Train);
    for v in 0..2 {
        let topic = rng.gen_range(0..2);
        let mut video = VideoRecord::new(format!("v{v}"), (0..2).map(|_| rng.gen_range(0.0..1.0)).collect());
        video.dish = Some(topic);
        for s in 0..2 {
            let mut seg = SegmentObservation::new(format!("v{v}-s{s}"), FrameSpan::new(10 * s, 10 * s + 10));
            let states: Vec<usize> = (0..schema.num_nodes()).map(|n| rng.gen_range(0..schema.num_states(n))).collect();
            seg.gold = Some(SemanticRepresentation::new(states).with_topic(topic));
            seg.attribute_scores = Some((0..dim).map(|_| rng.gen_range(0.0..1.0)).collect());
            seg.node_state_scores = Some(
                (0..schema.num_nodes())
                    .map(|n| (0..schema.num_states(n)).map(|_| rng.gen_range(0.0..1.0)).collect())
                    .collect(),
            );
            video.segments.push(seg);
        }
        d.videos.push(video);
    }
    (model, d)
}
