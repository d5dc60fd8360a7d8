//! Temporal segmentation of a video into describable snippets and removal
//! of background snippets.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FrameSpan, FrameStream};
use crate::error::{Error, Result};

const MODULE: &str = "segmentation";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Frames per initial block.
    pub initial_len: u64,
    pub similarity: Similarity,
    /// Adjacent blocks merge while their similarity is at least this.
    pub stop_threshold: f64,
    /// Spans scoring below this are background.
    pub background_threshold: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            initial_len: 60,
            similarity: Similarity::Cosine,
            stop_threshold: 0.982,
            background_threshold: 0.0,
        }
    }
}

impl SegmenterConfig {
    fn check(&self) -> Result<()> {
        if self.initial_len == 0 || !(self.stop_threshold > -1.0 && self.stop_threshold <= 1.0) {
            return Err(Error::module(MODULE, "initial_len must be ≥ 1 and stop_threshold in (-1, 1]"));
        }
        Ok(())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

struct Block {
    start: usize,
    end: usize,
    sum: Vec<f64>,
}

impl Block {
    fn mean(&self) -> Vec<f64> {
        let n = (self.end - self.start) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

/// Splits a score stream (one row per `chunk_len` frames) into spans:
/// fixed-size initial blocks, then greedy merging of the most similar
/// adjacent pair while its similarity reaches the stop threshold.
/// Similarity ties go to the earliest pair.
pub fn segment_rows(rows: &[Vec<f64>], chunk_len: u64, cfg: &SegmenterConfig) -> Result<Vec<FrameSpan>> {
    cfg.check()?;
    if rows.is_empty() {
        return Err(Error::module(MODULE, "empty score stream"));
    }
    if chunk_len == 0 {
        return Err(Error::module(MODULE, "chunk_len must be positive"));
    }
    let block_rows = cfg.initial_len.div_ceil(chunk_len).max(1) as usize;
    let mut blocks: Vec<Block> = (0..rows.len())
        .step_by(block_rows)
        .map(|start| {
            let end = (start + block_rows).min(rows.len());
            let mut sum = vec![0.0; rows[start].len()];
            for r in &rows[start..end] {
                for (s, x) in sum.iter_mut().zip(r) {
                    *s += x;
                }
            }
            Block { start, end, sum }
        })
        .collect();

    let mut means: Vec<Vec<f64>> = blocks.iter().map(Block::mean).collect();
    let mut sims: Vec<f64> = means.windows(2).map(|w| cosine(&w[0], &w[1])).collect();
    loop {
        let Some((i, &best)) = sims
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (i, s)| match acc {
                Some((_, b)) if *s <= *b => acc,
                _ => Some((i, s)),
            })
        else {
            break;
        };
        if best < cfg.stop_threshold {
            break;
        }
        let right = blocks.remove(i + 1);
        let left = &mut blocks[i];
        left.end = right.end;
        for (s, x) in left.sum.iter_mut().zip(&right.sum) {
            *s += x;
        }
        means.remove(i + 1);
        means[i] = blocks[i].mean();
        sims.remove(i);
        if i > 0 {
            sims[i - 1] = cosine(&means[i - 1], &means[i]);
        }
        if i < sims.len() {
            sims[i] = cosine(&means[i], &means[i + 1]);
        }
    }

    let total = rows.len() as u64 * chunk_len;
    Ok(blocks
        .iter()
        .map(|b| FrameSpan::new(b.start as u64 * chunk_len, (b.end as u64 * chunk_len).min(total)))
        .collect())
}

pub fn segment_video(stream: &FrameStream, cfg: &SegmenterConfig) -> Result<Vec<FrameSpan>> {
    segment_rows(&stream.attribute_scores, stream.chunk_len, cfg)
}

/// Logistic model separating describable snippets from background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BackgroundClassifier {
    /// Decision value `w·x + b`; positive means "describable".
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("classifier serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let clf: Self = serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        if !(clf.bias.is_finite() && clf.weights.iter().all(|w| w.is_finite())) {
            return Err(Error::artifact(path, "non-finite weight"));
        }
        Ok(clf)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 0.01,
            learning_rate: 0.5,
            iterations: 2000,
        }
    }
}

/// Full-batch gradient descent on the mean logistic loss plus `l2·‖w‖²`
/// (bias unregularized), starting from zero.
pub fn train_logistic(xs: &[&[f64]], labels: &[bool], cfg: &LogisticConfig) -> Result<BackgroundClassifier> {
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::module(MODULE, "need one label per feature vector"));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::module(MODULE, "background training needs both classes"));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::module(MODULE, "inconsistent feature dimension"));
    }
    let n = xs.len() as f64;
    let mut clf = BackgroundClassifier {
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    let mut gw = vec![0.0; dim];
    for _ in 0..cfg.iterations {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            let err = clf.probability(x) - f64::from(u8::from(y));
            for (g, v) in gw.iter_mut().zip(x.iter()) {
                *g += err * v;
            }
            gb += err;
        }
        for (w, g) in clf.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * (g / n + 2.0 * cfg.l2 * *w);
        }
        clf.bias -= cfg.learning_rate * gb / n;
    }
    Ok(clf)
}

/// Labeled snippets are positives, unlabeled ones negatives.
pub fn train_background(train: &Dataset) -> Result<BackgroundClassifier> {
    train_background_with(train, &LogisticConfig::default())
}

pub fn train_background_with(train: &Dataset, cfg: &LogisticConfig) -> Result<BackgroundClassifier> {
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for (v, s) in train.segments() {
        let x = s.attribute_scores.as_deref().ok_or_else(|| {
            Error::module(
                MODULE,
                format!("video {} segment {} lacks attribute scores", v.video_id, s.segment_id),
            )
        })?;
        xs.push(x);
        labels.push(s.is_labeled());
    }
    train_logistic(&xs, &labels, cfg)
}

/// Indices of the spans whose classifier score reaches the background
/// threshold, in input order.
pub fn filter_background(
    spans: &[FrameSpan],
    means: &[Vec<f64>],
    clf: &BackgroundClassifier,
    cfg: &SegmenterConfig,
) -> Vec<usize> {
    assert_eq!(spans.len(), means.len(), "one mean vector per span");
    means
        .iter()
        .enumerate()
        .filter(|(_, m)| clf.score(m) >= cfg.background_threshold)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(v: &[f64], n: usize) -> Vec<Vec<f64>> {
        vec![v.to_vec(); n]
    }

    #[test]
    fn constant_stream_is_one_span() {
        let rows = block(&[0.3, 0.7, 0.1], 500);
        let spans = segment_rows(&rows, 1, &SegmenterConfig::default()).unwrap();
        assert_eq!(spans, vec![FrameSpan::new(0, 500)]);
    }

    #[test]
    fn orthogonal_halves_split_at_junction() {
        let mut rows = block(&[1.0, 0.0], 180);
        rows.extend(block(&[0.0, 1.0], 240));
        let spans = segment_rows(&rows, 1, &SegmenterConfig::default()).unwrap();
        assert_eq!(spans, vec![FrameSpan::new(0, 180), FrameSpan::new(180, 420)]);
    }

    #[test]
    fn threshold_one_keeps_noisy_blocks() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![1.0, (i / 60) as f64 * 0.01 + 0.05]).collect();
        let cfg = SegmenterConfig {
            stop_threshold: 0.999_999_9,
            ..Default::default()
        };
        let spans = segment_rows(&rows, 1, &cfg).unwrap();
        assert_eq!(spans.len(), 5);
        assert_eq!(spans[4], FrameSpan::new(240, 300));
    }

    #[test]
    fn chunked_rows_map_to_frames() {
        let mut rows = block(&[1.0, 0.0], 12);
        rows.extend(block(&[0.0, 1.0], 7));
        let spans = segment_rows(&rows, 10, &SegmenterConfig::default()).unwrap();
        assert_eq!(spans, vec![FrameSpan::new(0, 120), FrameSpan::new(120, 190)]);
    }

    #[test]
    fn zero_vectors_never_merge() {
        let rows = block(&[0.0, 0.0], 180);
        let spans = segment_rows(&rows, 1, &SegmenterConfig::default()).unwrap();
        assert_eq!(spans.len(), 3);
    }

    #[test]
    fn empty_and_bad_config_error() {
        assert!(segment_rows(&[], 1, &SegmenterConfig::default()).is_err());
        let cfg = SegmenterConfig {
            initial_len: 0,
            ..Default::default()
        };
        assert!(segment_rows(&block(&[1.0], 3), 1, &cfg).is_err());
    }

    #[test]
    fn separable_logistic_fits() {
        let xs: Vec<Vec<f64>> = vec![vec![1.0, 0.2], vec![0.9, 0.0], vec![0.1, 1.0], vec![0.0, 0.8]];
        let labels = [true, true, false, false];
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let clf = train_logistic(&refs, &labels, &LogisticConfig::default()).unwrap();
        for (x, &y) in xs.iter().zip(&labels) {
            assert_eq!(clf.score(x) >= 0.0, y);
        }

        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let neg = train_logistic(&refs, &flipped, &LogisticConfig::default()).unwrap();
        for (a, b) in clf.weights.iter().zip(&neg.weights) {
            assert!((a + b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((clf.bias + neg.bias).abs() < 1e-9);
    }

    #[test]
    fn uninformative_features_give_half() {
        let xs = vec![vec![0.5, 0.5]; 6];
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let labels = [true, false, true, false, true, false];
        let clf = train_logistic(&refs, &labels, &LogisticConfig::default()).unwrap();
        assert!((clf.probability(&xs[0]) - 0.5).abs() < 1e-6);
        assert!(clf.bias.abs() < 1e-6);
    }

    #[test]
    fn one_class_is_an_error() {
        let xs = [vec![1.0]];
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        assert!(train_logistic(&refs, &[true], &LogisticConfig::default()).is_err());
    }

    #[test]
    fn zero_classifier_keeps_everything() {
        let clf = BackgroundClassifier {
            weights: vec![0.0; 2],
            bias: 0.0,
        };
        let spans = [FrameSpan::new(0, 10), FrameSpan::new(10, 20)];
        let means = [vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(filter_background(&spans, &means, &clf, &SegmenterConfig::default()), vec![0, 1]);
    }

    #[test]
    fn engineered_background_span_is_dropped() {
        let clf = BackgroundClassifier {
            weights: vec![1.0, -1.0],
            bias: 0.0,
        };
        let spans = [FrameSpan::new(0, 10), FrameSpan::new(10, 20), FrameSpan::new(20, 30)];
        let means = [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.2]];
        assert_eq!(filter_background(&spans, &means, &clf, &SegmenterConfig::default()), vec![0, 2]);
    }
}
