//! WebAssembly bindings for the static demo page. Every export returns a
//! JSON string; failures come back as `{"error": "..."}`.

use latticedesc::bleu::{bleu, tokenize};
use latticedesc::cohesion::{cohesive_sentences, CohesionConfig, Gender, Lexicon};
use latticedesc::decoder::{decode, DecoderWeights};
use latticedesc::fixtures::{background_examples, block_stream, cucumber_units, egg_shells};
use latticedesc::segmentation::{filter_background, segment_rows, train_logistic, LogisticConfig, SegmenterConfig};
use latticedesc::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    m.iter_mut().for_each(|a| *a /= rows.len() as f64);
    m
}

/// Segments a seeded three-block score stream (optionally with a background
/// block) and runs a background filter trained on separate examples.
#[wasm_bindgen]
pub fn segment_stream(seed: u32, noise: f64, threshold: f64, with_background: bool) -> String {
    respond((|| {
        let stream = block_stream(seed as u64, noise, with_background);
        let cfg = SegmenterConfig {
            stop_threshold: threshold,
            ..SegmenterConfig::default()
        };
        let spans = segment_rows(&stream.rows, 1, &cfg)?;
        let (xs, labels) = background_examples(seed as u64 ^ 0x5eed, 20, noise);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let clf = train_logistic(&refs, &labels, &LogisticConfig::default())?;
        let means: Vec<Vec<f64>> = spans
            .iter()
            .map(|s| mean(&stream.rows[s.start as usize..s.end as usize]))
            .collect();
        let kept = filter_background(&spans, &means, &clf, &cfg);
        // Dominant dimension per frame, for drawing the stream as a strip.
        let dominant: Vec<usize> = stream
            .rows
            .iter()
            .map(|r| (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap_or(0))
            .collect();
        Ok(json!({
            "frames": stream.rows.len(),
            "dominant": dominant,
            "truth": stream.boundaries,
            "background": stream.background.map(|b| [b.start, b.end]),
            "spans": spans.iter().map(|s| [s.start, s.end]).collect::<Vec<_>>(),
            "kept": (0..spans.len()).map(|i| kept.contains(&i)).collect::<Vec<_>>(),
        }))
    })())
}

/// Decodes the egg-shells/cucumber lattice under the given weights and
/// reports the best derivation restricted to each lattice path.
#[wasm_bindgen]
pub fn decode_lattice(p_shells: f64, tm: f64, lm: f64, lattice: f64, word_penalty: f64) -> String {
    respond((|| {
        if !(0.0..=1.0).contains(&p_shells) {
            return Err(latticedesc::Error::InvalidArgument("confidence must lie in [0, 1]".into()));
        }
        let f = egg_shells(p_shells);
        let w = DecoderWeights {
            tm_fwd: tm,
            tm_bwd: tm,
            lm,
            lattice,
            word_penalty,
            distortion: 0.0,
        };
        let best = decode(&f.lattice, &f.phrases, &f.lm, &w, None)?;
        let mut paths = Vec::new();
        for p in f.lattice.paths() {
            let forced = decode(&f.lattice.restrict(&p)?, &f.phrases, &f.lm, &w, None)?;
            paths.push(json!({
                "source": forced.source.join(" "),
                "confidence": p.iter().map(|&e| f.lattice.edges()[e].log_conf).sum::<f64>().exp(),
                "output": forced.sentence.join(" "),
                "score": forced.score,
                "features": forced.features,
            }));
        }
        Ok(json!({
            "plf": f.lattice.to_plf(),
            "best": { "source": best.source.join(" "), "output": best.sentence.join(" "), "score": best.score },
            "paths": paths,
        }))
    })())
}

/// Applies the cohesion rules to the six cucumber sentences and scores the
/// paragraph against `reference` with BLEU@4.
#[wasm_bindgen]
pub fn cohesion(gender: &str, merge: bool, referring: bool, adverbials: bool, reference: &str) -> String {
    respond((|| {
        let cfg = CohesionConfig {
            gender: gender.parse::<Gender>()?,
            merge_objects: merge,
            merge_verbs: merge,
            referring_expressions: referring,
            adverbials,
        };
        let units = cucumber_units();
        let sentences = cohesive_sentences(&units, &cfg, &Lexicon::bundled());
        let paragraph = sentences.join(" ");
        let reference = tokenize(reference);
        let score = if reference.is_empty() {
            Value::Null
        } else {
            let r = bleu(&[tokenize(&paragraph)], &[vec![reference]])?;
            json!({ "score": r.score, "summary": r.summary() })
        };
        Ok(json!({
            "input": units.iter().map(|u| u.text.as_str()).collect::<Vec<_>>(),
            "sentences": sentences,
            "paragraph": paragraph,
            "bleu": score,
        }))
    })())
}
