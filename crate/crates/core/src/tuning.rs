//! Coordinate-wise grid search of decoder weights for dev-set BLEU.

use rayon::prelude::*;

use crate::bleu::bleu;
use crate::decoder::{decode_prepared, prepare, DecoderWeights, Prepared};
use crate::error::{Error, Result};
use crate::lattice::WordLattice;
use crate::translation::lm::NgramLm;
use crate::translation::phrases::PhraseTable;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub rounds: usize,
    /// Grid points per axis, centred on the current value.
    pub points: usize,
    /// Half-width of the search interval.
    pub radius: f64,
    pub beam: Option<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            rounds: 10,
            points: 21,
            radius: 2.0,
            beam: Some(100),
        }
    }
}

/// Axes searched, in order. Distortion is left alone: it never contributes
/// under monotone decoding.
const AXES: [usize; 5] = [0, 1, 2, 3, 4];

/// One tuning trace line.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TuneStep {
    pub round: usize,
    pub axis: &'static str,
    pub value: f64,
    pub bleu: f64,
}

pub fn dev_bleu(
    prepared: &[Prepared],
    refs: &[Vec<Vec<String>>],
    lm: &NgramLm,
    w: &DecoderWeights,
    beam: Option<usize>,
) -> Result<f64> {
    let outputs: Vec<Vec<String>> = prepared
        .par_iter()
        .map(|p| decode_prepared(p, lm, w, beam).map(|d| d.sentence))
        .collect::<Result<_>>()?;
    Ok(bleu(&outputs, refs)?.score)
}

/// Each round visits every axis and moves it to the grid point with the
/// best corpus BLEU; ties keep the point nearest the current value, then
/// the lower one. Stops early after a round without changes.
pub fn tune_weights(
    dev: &[(WordLattice, Vec<Vec<String>>)],
    pt: &PhraseTable,
    lm: &NgramLm,
    init: DecoderWeights,
    cfg: &TuneConfig,
) -> Result<(DecoderWeights, Vec<TuneStep>)> {
    if dev.is_empty() {
        return Err(Error::module("lattice_decoder", "empty dev set"));
    }
    if !init.is_finite() {
        return Err(Error::module("lattice_decoder", "non-finite initial weights"));
    }
    let prepared: Vec<Prepared> = dev.par_iter().map(|(l, _)| prepare(l, pt, lm)).collect();
    let refs: Vec<Vec<Vec<String>>> = dev.iter().map(|(_, r)| r.clone()).collect();
    let mut w = init.to_array();
    let mut best = dev_bleu(&prepared, &refs, lm, &init, cfg.beam)?;
    let mut trace = Vec::new();
    let half = (cfg.points.max(1) - 1) / 2;
    let step = if half == 0 { 0.0 } else { cfg.radius / half as f64 };
    for round in 0..cfg.rounds {
        let mut changed = false;
        for &axis in &AXES {
            let current = w[axis];
            let mut choice = (current, best);
            for k in 0..=2 * half {
                let offset = (k as f64 - half as f64) * step;
                if offset == 0.0 {
                    continue;
                }
                let mut cand = w;
                cand[axis] = current + offset;
                let score = dev_bleu(&prepared, &refs, lm, &DecoderWeights::from_array(cand), cfg.beam)?;
                let closer = offset.abs() < (choice.0 - current).abs()
                    || (offset.abs() == (choice.0 - current).abs() && cand[axis] < choice.0);
                if score > choice.1 || (score == choice.1 && closer) {
                    choice = (cand[axis], score);
                }
            }
            if choice.0 != current {
                w[axis] = choice.0;
                best = choice.1;
                changed = true;
            }
            trace.push(TuneStep {
                round,
                axis: DecoderWeights::NAMES[axis],
                value: w[axis],
                bleu: best,
            });
        }
        if !changed {
            break;
        }
    }
    Ok((DecoderWeights::from_array(w), trace))
}
