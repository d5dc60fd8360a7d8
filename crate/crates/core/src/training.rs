//! Regularized maximum-likelihood training of the CRF and per-node
//! accuracy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::{pair_index, pairs, CrfModel, UnaryMode};
use crate::data::{Dataset, SegmentObservation, VideoRecord};
use crate::error::{Error, Result};
use crate::inference::{self, ClampSet, InferenceOptions, Mode, Potentials};

const MODULE: &str = "crf_training";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Step size at epoch `t` is `learning_rate / (1 + decay * t)`.
    pub decay: f64,
    pub epochs: usize,
    pub reg: f64,
    pub inference: InferenceOptions,
    pub seed: u64,
    pub unary_mode: UnaryMode,
    /// Pairwise weights start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            decay: 0.01,
            epochs: 100,
            reg: 0.01,
            inference: InferenceOptions::default(),
            seed: 0,
            unary_mode: UnaryMode::Semantic,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.decay < 0.0 || self.epochs == 0 || !(self.reg >= 0.0) {
            return Err(Error::module(MODULE, "invalid training configuration"));
        }
        Ok(())
    }
}

/// Objective trace of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective before the first update, then after every epoch.
    pub objectives: Vec<f64>,
}

/// A labeled training example: gold assignment over all variables.
pub struct Example<'a> {
    pub video: &'a VideoRecord,
    pub segment: &'a SegmentObservation,
    pub assignment: Vec<usize>,
}

/// Collects labeled examples; every segment must carry a gold SR and topic.
pub fn examples(train: &Dataset) -> Result<Vec<Example<'_>>> {
    let mut out = Vec::new();
    for (video, segment) in train.segments() {
        let gold = segment.gold.as_ref().ok_or_else(|| {
            Error::module(
                MODULE,
                format!("video {} segment {} has no gold SR", video.video_id, segment.segment_id),
            )
        })?;
        let topic = gold.topic.ok_or_else(|| {
            Error::module(MODULE, format!("video {} has no gold topic (dish)", video.video_id))
        })?;
        let mut assignment = gold.states.clone();
        assignment.push(topic);
        out.push(Example {
            video,
            segment,
            assignment,
        });
    }
    if out.is_empty() {
        return Err(Error::module(MODULE, "no training segments"));
    }
    Ok(out)
}

/// Conditional log-likelihood of one example and its gradient.
fn example_gradient(model: &CrfModel, ex: &Example<'_>, opts: &InferenceOptions) -> Result<(f64, Vec<f64>)> {
    let pot = Potentials::from_model(model, ex.segment, ex.video, &ClampSet::new())?;
    let r = inference::infer_potentials(&pot, Mode::Sum, opts)?;
    let ll = pot.score(&ex.assignment) - r.log_partition;

    let schema = model.schema();
    let v = schema.num_variables();
    let y = &ex.assignment;
    let mut g = vec![0.0; model.num_params()];
    let mut off = 0;
    match model.unary_mode() {
        UnaryMode::Attribute => {
            let x = model.attribute_scores(ex.segment)?;
            let dim = x.len();
            for n in 0..schema.num_nodes() {
                for (s, p) in r.marginals[n].iter().enumerate() {
                    let coef = f64::from(u8::from(y[n] == s)) - p;
                    let row = &mut g[off + s * dim..off + (s + 1) * dim];
                    for (gi, xi) in row.iter_mut().zip(x) {
                        *gi += coef * xi;
                    }
                }
                off += schema.num_states(n) * dim;
            }
        }
        UnaryMode::Semantic => {
            let x = model.node_state_scores(ex.segment)?;
            for n in 0..schema.num_nodes() {
                let expected: f64 = r.marginals[n].iter().zip(&x[n]).map(|(p, s)| p * s).sum();
                g[off + n] = x[n][y[n]] - expected;
            }
            off += schema.num_nodes();
        }
    }
    let ts = &ex.video.topic_scores;
    let t = v - 1;
    let expected: f64 = r.marginals[t].iter().zip(ts).map(|(p, s)| p * s).sum();
    g[off] = ts[y[t]] - expected;
    off += 1;

    debug_assert_eq!(off, model.pairwise_offset());
    for (a, b) in pairs(v) {
        let pm = &r.pair_marginals[pair_index(v, a, b)];
        let cols = pm.cols();
        let block = &mut g[off..off + pm.as_slice().len()];
        for (gi, p) in block.iter_mut().zip(pm.as_slice()) {
            *gi -= p;
        }
        block[y[a] * cols + y[b]] += 1.0;
        off += pm.as_slice().len();
    }
    Ok((ll, g))
}

/// Summed log-likelihood and its gradient over the examples (no regularizer).
pub fn log_likelihood_gradient(
    model: &CrfModel,
    examples: &[Example<'_>],
    opts: &InferenceOptions,
) -> Result<(f64, Vec<f64>)> {
    let parts = examples
        .par_iter()
        .map(|ex| example_gradient(model, ex, opts))
        .collect::<Result<Vec<_>>>()?;
    // Sequential reduction keeps the summation order fixed.
    let mut ll = 0.0;
    let mut g = vec![0.0; model.num_params()];
    for (l, gi) in parts {
        ll += l;
        for (a, b) in g.iter_mut().zip(&gi) {
            *a += b;
        }
    }
    Ok((ll, g))
}

/// Summed log-likelihood only.
pub fn log_likelihood(model: &CrfModel, examples: &[Example<'_>], opts: &InferenceOptions) -> Result<f64> {
    let parts = examples
        .par_iter()
        .map(|ex| {
            let pot = Potentials::from_model(model, ex.segment, ex.video, &ClampSet::new())?;
            let r = inference::infer_potentials(&pot, Mode::Sum, opts)?;
            Ok(pot.score(&ex.assignment) - r.log_partition)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// Regularized objective `Σ log p(y | x, v) − λ‖w‖²`.
pub fn objective(model: &CrfModel, examples: &[Example<'_>], opts: &InferenceOptions) -> Result<f64> {
    let ll = log_likelihood(model, examples, opts)?;
    let norm: f64 = model.params().iter().map(|w| w * w).sum();
    Ok(ll - model.reg() * norm)
}

pub fn train_crf(train: &Dataset, cfg: &TrainConfig) -> Result<CrfModel> {
    train_crf_with_report(train, cfg).map(|(m, _)| m)
}

/// Proximal gradient ascent: a gradient step on the log-likelihood followed
/// by the closed-form L2 shrinkage. A step that lowers the objective is
/// retried at half the rate, so the objective never decreases.
pub fn train_crf_with_report(train: &Dataset, cfg: &TrainConfig) -> Result<(CrfModel, TrainReport)> {
    cfg.check()?;
    let examples = examples(train)?;
    let attribute_dim = match cfg.unary_mode {
        UnaryMode::Attribute => examples[0]
            .segment
            .attribute_scores
            .as_ref()
            .map(Vec::len)
            .ok_or_else(|| Error::module(MODULE, "attribute mode needs attribute scores"))?,
        UnaryMode::Semantic => 0,
    };
    let mut model = CrfModel::new(train.schema.clone(), cfg.unary_mode, attribute_dim)?;
    model.set_reg(cfg.reg);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.params();
    if cfg.init_scale > 0.0 {
        for w in &mut params[model.pairwise_offset()..] {
            *w = rng.gen_range(-cfg.init_scale..=cfg.init_scale);
        }
    }
    model.set_params(&params);

    let n = examples.len() as f64;
    let mut current = objective(&model, &examples, &cfg.inference)?;
    check_finite(current)?;
    let mut report = TrainReport {
        objectives: vec![current],
    };
    let mut backoff = 1.0;
    for epoch in 0..cfg.epochs {
        let (_, grad) = log_likelihood_gradient(&model, &examples, &cfg.inference)?;
        let base = model.params();
        let mut accepted = false;
        for _ in 0..30 {
            let eta = backoff * cfg.learning_rate / (1.0 + cfg.decay * epoch as f64) / n;
            let shrink = 1.0 + 2.0 * eta * cfg.reg;
            let proposal: Vec<f64> = base.iter().zip(&grad).map(|(w, g)| (w + eta * g) / shrink).collect();
            let mut candidate = model.clone();
            candidate.set_params(&proposal);
            let obj = objective(&candidate, &examples, &cfg.inference)?;
            check_finite(obj)?;
            if obj >= current {
                model = candidate;
                current = obj;
                accepted = true;
                break;
            }
            backoff *= 0.5;
        }
        report.objectives.push(current);
        if !accepted {
            break;
        }
    }
    model.set_final_objective(current);
    Ok((model, report))
}

fn check_finite(obj: f64) -> Result<()> {
    if obj.is_finite() {
        Ok(())
    } else {
        Err(Error::module(MODULE, "objective is not finite"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAccuracy {
    /// Node names in schema order.
    pub nodes: Vec<String>,
    pub per_node: Vec<f64>,
    pub dish: f64,
    pub segments: usize,
    pub videos: usize,
}

/// Per-node accuracy of topic-conditioned decoding over labeled segments,
/// plus the fraction of videos whose selected topic is the gold dish.
pub fn evaluate_nodes(model: &CrfModel, test: &Dataset, opts: &InferenceOptions) -> Result<NodeAccuracy> {
    let schema = model.schema();
    let videos: Vec<&VideoRecord> = test
        .videos
        .iter()
        .filter(|v| v.segments.iter().any(|s| s.is_labeled()))
        .collect();
    if videos.is_empty() {
        return Err(Error::module(MODULE, "no labeled test segments"));
    }
    let per_video = videos
        .par_iter()
        .map(|v| {
            let topic = inference::select_topic(model, v, opts)?;
            let mut correct = vec![0usize; schema.num_nodes()];
            let mut count = 0;
            for s in v.segments.iter().filter(|s| s.is_labeled()) {
                let gold = s.gold.as_ref().expect("labeled");
                let d = inference::decode_sr_given_topic(model, s, v, topic, opts)?;
                for (n, c) in correct.iter_mut().enumerate() {
                    *c += usize::from(d.sr.states[n] == gold.states[n]);
                }
                count += 1;
            }
            Ok((topic, v.dish, correct, count))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut correct = vec![0usize; schema.num_nodes()];
    let mut segments = 0;
    let (mut dish_hits, mut dish_total) = (0usize, 0usize);
    for (topic, dish, c, count) in per_video {
        for (a, b) in correct.iter_mut().zip(&c) {
            *a += b;
        }
        segments += count;
        if let Some(d) = dish {
            dish_total += 1;
            dish_hits += usize::from(d == topic);
        }
    }
    Ok(NodeAccuracy {
        nodes: schema.nodes().iter().map(|n| n.name.clone()).collect(),
        per_node: correct.iter().map(|&c| c as f64 / segments as f64).collect(),
        dish: if dish_total == 0 { 0.0 } else { dish_hits as f64 / dish_total as f64 },
        segments,
        videos: videos.len(),
    })
}
