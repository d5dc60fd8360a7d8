//! Marginal and MAP inference on the CRF, topic selection, and decoding of
//! segment SRs conditioned on the selected topic.
//!
//! Everything runs in the log domain. Ties are broken towards the lowest
//! state index, and for joint assignments towards the lexicographically
//! smallest one (first variable most significant).

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crf::{num_pairs, pair_index, pairs, CrfModel, Matrix};
use crate::data::{SegmentObservation, SemanticRepresentation, VideoRecord};
use crate::error::{Error, Result};
use crate::schema::NodeId;

/// Hard limit on exhaustive enumeration.
pub const MAX_ENUMERATION: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sum,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    /// [`infer`] enumerates exactly when the joint space is at most this
    /// large and falls back to loopy BP otherwise.
    pub exact_limit: u128,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            max_iter: 200,
            tol: 1e-6,
            damping: 0.5,
            exact_limit: 100_000,
        }
    }
}

/// Nodes fixed to a given state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClampSet(BTreeMap<NodeId, usize>);

impl ClampSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn topic(state: usize) -> Self {
        let mut c = Self::new();
        c.clamp(NodeId::Topic, state);
        c
    }

    pub fn clamp(&mut self, node: NodeId, state: usize) -> &mut Self {
        self.0.insert(node, state);
        self
    }

    pub fn get(&self, node: NodeId) -> Option<usize> {
        self.0.get(&node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.0.iter().map(|(&n, &s)| (n, s))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    /// Per variable (SR nodes, then topic): normalized marginals, or
    /// normalized max-marginals in MAX mode.
    pub marginals: Vec<Vec<f64>>,
    /// Pairwise marginals in [`pair_index`] order (SUM mode only).
    pub pair_marginals: Vec<Matrix>,
    pub map: Vec<usize>,
    /// Log partition function (Bethe estimate for loopy BP); in MAX mode the
    /// energy of the decoded assignment.
    pub log_partition: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl InferenceResult {
    pub fn topic_marginal(&self) -> &[f64] {
        self.marginals.last().expect("topic variable")
    }

    pub fn sr_marginals(&self) -> &[Vec<f64>] {
        &self.marginals[..self.marginals.len() - 1]
    }

    /// MAP SR, with the topic state attached.
    pub fn map_sr(&self) -> SemanticRepresentation {
        let (topic, states) = self.map.split_last().expect("topic variable");
        SemanticRepresentation::new(states.to_vec()).with_topic(*topic)
    }
}

/// Log-potentials of one inference problem: unaries with clamps applied
/// (`-inf` outside the clamped state) and pairwise tables.
#[derive(Clone, Debug)]
pub struct Potentials<'a> {
    pub unary: Vec<Vec<f64>>,
    pub pairwise: Cow<'a, [Matrix]>,
}

impl<'a> Potentials<'a> {
    pub fn new(unary: Vec<Vec<f64>>, pairwise: Cow<'a, [Matrix]>) -> Self {
        let v = unary.len();
        assert_eq!(pairwise.len(), num_pairs(v), "one table per variable pair");
        for (a, b) in pairs(v) {
            let m = &pairwise[pair_index(v, a, b)];
            assert_eq!((m.rows(), m.cols()), (unary[a].len(), unary[b].len()), "pair table shape");
        }
        Potentials { unary, pairwise }
    }

    pub fn from_model(
        model: &'a CrfModel,
        seg: &SegmentObservation,
        vid: &VideoRecord,
        clamps: &ClampSet,
    ) -> Result<Self> {
        let mut unary = model.unary_table(seg, vid)?;
        let card = model.schema().cardinalities();
        for (node, state) in clamps.iter() {
            let var = match node {
                NodeId::Sr(n) if n >= model.schema().num_nodes() => {
                    return Err(Error::InvalidArgument(format!("clamp on unknown node {n}")))
                }
                _ => model.schema().variable(node),
            };
            if state >= card[var] {
                return Err(Error::InvalidArgument(format!("clamp state {state} out of range for {node}")));
            }
            for (s, u) in unary[var].iter_mut().enumerate() {
                if s != state {
                    *u = f64::NEG_INFINITY;
                }
            }
        }
        let v = card.len();
        let tables: Vec<Matrix> = pairs(v).map(|(a, b)| model.pair_table(a, b).clone()).collect();
        Ok(Potentials {
            unary,
            pairwise: Cow::Owned(tables),
        })
    }

    pub fn num_variables(&self) -> usize {
        self.unary.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.unary.iter().map(Vec::len).collect()
    }

    #[inline]
    pub fn pair(&self, a: usize, sa: usize, b: usize, sb: usize) -> f64 {
        let m = &self.pairwise[pair_index(self.unary.len(), a, b)];
        if a < b {
            m.get(sa, sb)
        } else {
            m.get(sb, sa)
        }
    }

    /// Log-potential of a full assignment.
    pub fn score(&self, assignment: &[usize]) -> f64 {
        let v = self.unary.len();
        let mut e: f64 = (0..v).map(|i| self.unary[i][assignment[i]]).sum();
        for (a, b) in pairs(v) {
            e += self.pairwise[pair_index(v, a, b)].get(assignment[a], assignment[b]);
        }
        e
    }

    pub fn joint_size(&self) -> u128 {
        self.unary.iter().map(|u| u.len() as u128).product()
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn reduce(mode: Mode, xs: impl Iterator<Item = f64> + Clone) -> f64 {
    match mode {
        Mode::Sum => log_sum_exp(xs),
        Mode::Max => xs.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Normalizes log-values into a probability vector.
fn softmax(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs.iter().copied());
    xs.iter().map(|x| (x - z).exp()).collect()
}

fn x_ln_x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Loopy belief propagation on a model, one segment and its video.
pub fn loopy_bp(
    model: &CrfModel,
    seg: &SegmentObservation,
    vid: &VideoRecord,
    clamps: &ClampSet,
    mode: Mode,
    opts: &InferenceOptions,
) -> Result<InferenceResult> {
    let pot = Potentials::from_model(model, seg, vid, clamps)?;
    Ok(loopy_bp_potentials(&pot, mode, opts))
}

/// Loopy BP with a synchronous, damped schedule over all directed edges of
/// the fully connected graph.
pub fn loopy_bp_potentials(pot: &Potentials<'_>, mode: Mode, opts: &InferenceOptions) -> InferenceResult {
    let v = pot.num_variables();
    let card = pot.cardinalities();
    // msg[i * v + j]: message from i to j, over the states of j.
    let mut msg: Vec<Vec<f64>> = (0..v * v).map(|k| vec![0.0; card[k % v]]).collect();
    let mut next = msg.clone();
    let mut belief: Vec<Vec<f64>> = pot.unary.clone();

    let mut converged = v <= 1;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        compute_beliefs(pot, &msg, &mut belief);
        let mut delta: f64 = 0.0;
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let into_i = &msg[j * v + i];
                let cavity: Vec<f64> = belief[i].iter().zip(into_i).map(|(b, m)| b - m).collect();
                let out = &mut next[i * v + j];
                for (xj, o) in out.iter_mut().enumerate() {
                    *o = reduce(
                        mode,
                        cavity.iter().enumerate().map(|(xi, c)| c + pot.pair(i, xi, j, xj)),
                    );
                }
                normalize_message(mode, out);
                let old = &msg[i * v + j];
                if opts.damping > 0.0 {
                    for (o, p) in out.iter_mut().zip(old) {
                        *o = (1.0 - opts.damping) * *o + opts.damping * p;
                    }
                    normalize_message(mode, out);
                }
                for (o, p) in out.iter().zip(old) {
                    let d = (o - p).abs();
                    if d.is_finite() {
                        delta = delta.max(d);
                    }
                }
            }
        }
        std::mem::swap(&mut msg, &mut next);
        converged = delta < opts.tol;
    }
    compute_beliefs(pot, &msg, &mut belief);

    let marginals: Vec<Vec<f64>> = belief.iter().map(|b| softmax(b)).collect();
    let map: Vec<usize> = belief.iter().map(|b| argmax(b)).collect();

    let (pair_marginals, log_partition) = match mode {
        Mode::Max => (Vec::new(), pot.score(&map)),
        Mode::Sum => {
            let mut pm = Vec::with_capacity(num_pairs(v));
            let mut log_z = 0.0;
            for (i, m) in marginals.iter().enumerate() {
                let ent = -m.iter().map(|&p| x_ln_x(p)).sum::<f64>();
                let avg: f64 = m
                    .iter()
                    .zip(&pot.unary[i])
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, u)| p * u)
                    .sum();
                log_z += avg - (v as f64 - 2.0) * ent;
            }
            for (a, b) in pairs(v) {
                let mut table = Matrix::zeros(card[a], card[b]);
                let ca: Vec<f64> = belief[a].iter().zip(&msg[b * v + a]).map(|(x, m)| x - m).collect();
                let cb: Vec<f64> = belief[b].iter().zip(&msg[a * v + b]).map(|(x, m)| x - m).collect();
                let mut logs = Vec::with_capacity(card[a] * card[b]);
                for (xa, la) in ca.iter().enumerate() {
                    for (xb, lb) in cb.iter().enumerate() {
                        logs.push(la + lb + pot.pair(a, xa, b, xb));
                    }
                }
                let probs = softmax(&logs);
                let mut avg = 0.0;
                let mut ent = 0.0;
                for (k, &p) in probs.iter().enumerate() {
                    let (xa, xb) = (k / card[b], k % card[b]);
                    table.set(xa, xb, p);
                    if p > 0.0 {
                        avg += p * pot.pair(a, xa, b, xb);
                    }
                    ent -= x_ln_x(p);
                }
                log_z += avg + ent;
                pm.push(table);
            }
            (pm, log_z)
        }
    };

    InferenceResult {
        marginals,
        pair_marginals,
        map,
        log_partition,
        converged,
        iterations,
    }
}

fn compute_beliefs(pot: &Potentials<'_>, msg: &[Vec<f64>], belief: &mut [Vec<f64>]) {
    let v = pot.num_variables();
    for (j, b) in belief.iter_mut().enumerate() {
        b.copy_from_slice(&pot.unary[j]);
        for i in (0..v).filter(|&i| i != j) {
            for (x, m) in b.iter_mut().zip(&msg[i * v + j]) {
                *x += m;
            }
        }
    }
}

fn normalize_message(mode: Mode, m: &mut [f64]) {
    let z = reduce(mode, m.iter().copied());
    if z.is_finite() {
        m.iter_mut().for_each(|x| *x -= z);
    }
}

/// Exact inference by enumerating every joint assignment.
pub fn exhaustive_inference(
    model: &CrfModel,
    seg: &SegmentObservation,
    vid: &VideoRecord,
    clamps: &ClampSet,
) -> Result<InferenceResult> {
    let pot = Potentials::from_model(model, seg, vid, clamps)?;
    exhaustive_potentials(&pot)
}

/// Depth-first enumeration sharing partial energies between assignments
/// with a common prefix. Clamped (`-inf`) states are skipped.
struct Enumerator<'p, 'a> {
    pot: &'p Potentials<'a>,
    allowed: Vec<Vec<usize>>,
    assign: Vec<usize>,
}

impl Enumerator<'_, '_> {
    /// Energy contribution of setting `var` to `s` given the prefix.
    fn local(&self, var: usize, s: usize) -> f64 {
        let mut e = self.pot.unary[var][s];
        for a in 0..var {
            e += self.pot.pair(a, self.assign[a], var, s);
        }
        e
    }

    /// Maximum energy and first maximizing assignment.
    fn max(&mut self, var: usize, partial: f64, best: &mut (f64, Vec<usize>)) {
        if var == self.allowed.len() {
            if partial > best.0 {
                best.0 = partial;
                best.1.clone_from(&self.assign);
            }
            return;
        }
        for k in 0..self.allowed[var].len() {
            let s = self.allowed[var][k];
            let e = partial + self.local(var, s);
            self.assign[var] = s;
            self.max(var + 1, e, best);
        }
    }

    /// Returns the summed weight `Σ exp(E - shift)` of the subtree and adds it
    /// to the marginal and pair accumulators of the deepest assigned variable.
    fn sum(&mut self, var: usize, partial: f64, shift: f64, marg: &mut [Vec<f64>], pm: &mut [Matrix]) -> f64 {
        let v = self.allowed.len();
        if var == v {
            return (partial - shift).exp();
        }
        let mut total = 0.0;
        for k in 0..self.allowed[var].len() {
            let s = self.allowed[var][k];
            let e = partial + self.local(var, s);
            self.assign[var] = s;
            let w = self.sum(var + 1, e, shift, marg, pm);
            marg[var][s] += w;
            for a in 0..var {
                pm[pair_index(v, a, var)].as_mut_slice()[self.assign[a] * self.pot.unary[var].len() + s] += w;
            }
            total += w;
        }
        total
    }
}

pub fn exhaustive_potentials(pot: &Potentials<'_>) -> Result<InferenceResult> {
    let v = pot.num_variables();
    let card = pot.cardinalities();
    let allowed: Vec<Vec<usize>> = pot
        .unary
        .iter()
        .map(|u| (0..u.len()).filter(|&s| u[s] > f64::NEG_INFINITY).collect())
        .collect();
    let size: u128 = allowed.iter().map(|a| a.len() as u128).product();
    if size > MAX_ENUMERATION {
        return Err(Error::StateSpaceTooLarge(size));
    }
    if size == 0 {
        return Err(Error::InvalidArgument("no admissible assignment".into()));
    }
    let mut en = Enumerator {
        pot,
        allowed,
        assign: vec![0; v],
    };
    let mut best = (f64::NEG_INFINITY, vec![0; v]);
    en.max(0, 0.0, &mut best);
    let (max_e, map) = best;

    let mut marg: Vec<Vec<f64>> = card.iter().map(|&c| vec![0.0; c]).collect();
    let mut pm: Vec<Matrix> = pairs(v).map(|(a, b)| Matrix::zeros(card[a], card[b])).collect();
    let z = en.sum(0, 0.0, max_e, &mut marg, &mut pm);
    marg.iter_mut().flatten().for_each(|x| *x /= z);
    pm.iter_mut().flat_map(|m| m.as_mut_slice().iter_mut()).for_each(|x| *x /= z);

    Ok(InferenceResult {
        marginals: marg,
        pair_marginals: pm,
        map,
        log_partition: max_e + z.ln(),
        converged: true,
        iterations: 0,
    })
}

/// Exact inference when the joint space is within `opts.exact_limit`,
/// loopy BP otherwise.
pub fn infer(
    model: &CrfModel,
    seg: &SegmentObservation,
    vid: &VideoRecord,
    clamps: &ClampSet,
    mode: Mode,
    opts: &InferenceOptions,
) -> Result<InferenceResult> {
    let pot = Potentials::from_model(model, seg, vid, clamps)?;
    infer_potentials(&pot, mode, opts)
}

pub(crate) fn infer_potentials(pot: &Potentials<'_>, mode: Mode, opts: &InferenceOptions) -> Result<InferenceResult> {
    if pot.joint_size() <= opts.exact_limit.min(MAX_ENUMERATION) {
        let mut r = exhaustive_potentials(pot)?;
        if mode == Mode::Max {
            r.log_partition = pot.score(&r.map);
        }
        Ok(r)
    } else {
        Ok(loopy_bp_potentials(pot, mode, opts))
    }
}

/// Posterior over topics given a single segment.
pub fn topic_posteriors(
    model: &CrfModel,
    seg: &SegmentObservation,
    vid: &VideoRecord,
    opts: &InferenceOptions,
) -> Result<Vec<f64>> {
    let r = infer(model, seg, vid, &ClampSet::new(), Mode::Sum, opts)?;
    Ok(r.topic_marginal().to_vec())
}

/// Topic with the highest posterior in any segment; ties go to the lowest
/// topic index.
pub fn select_topic_from_posteriors(posteriors: &[Vec<f64>]) -> Option<usize> {
    let first = posteriors.first()?;
    let best_per_topic: Vec<f64> = (0..first.len())
        .map(|t| posteriors.iter().map(|p| p[t]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Some(argmax(&best_per_topic))
}

pub fn select_topic(model: &CrfModel, vid: &VideoRecord, opts: &InferenceOptions) -> Result<usize> {
    if vid.segments.is_empty() {
        return Err(Error::EmptyVideo(vid.video_id.clone()));
    }
    let posteriors = vid
        .segments
        .iter()
        .map(|s| topic_posteriors(model, s, vid, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_topic_from_posteriors(&posteriors).expect("nonempty"))
}

/// SR decoded for one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSegment {
    pub sr: SemanticRepresentation,
    /// Per SR node marginals (topic excluded).
    pub marginals: Vec<Vec<f64>>,
    pub converged: bool,
}

/// MAP SR and marginals with the topic clamped to `topic`.
pub fn decode_sr_given_topic(
    model: &CrfModel,
    seg: &SegmentObservation,
    vid: &VideoRecord,
    topic: usize,
    opts: &InferenceOptions,
) -> Result<DecodedSegment> {
    if topic >= model.schema().num_topics() {
        return Err(Error::InvalidArgument(format!("topic {topic} out of range")));
    }
    let pot = Potentials::from_model(model, seg, vid, &ClampSet::topic(topic))?;
    let max = infer_potentials(&pot, Mode::Max, opts)?;
    let sum = infer_potentials(&pot, Mode::Sum, opts)?;
    Ok(DecodedSegment {
        sr: max.map_sr(),
        marginals: sum.sr_marginals().to_vec(),
        converged: max.converged && sum.converged,
    })
}

/// MAP SR with the topic left free, i.e. without cross-segment consistency.
pub fn decode_sr_unconditioned(
    model: &CrfModel,
    seg: &SegmentObservation,
    vid: &VideoRecord,
    opts: &InferenceOptions,
) -> Result<DecodedSegment> {
    let pot = Potentials::from_model(model, seg, vid, &ClampSet::new())?;
    let max = infer_potentials(&pot, Mode::Max, opts)?;
    let sum = infer_potentials(&pot, Mode::Sum, opts)?;
    Ok(DecodedSegment {
        sr: max.map_sr(),
        marginals: sum.sr_marginals().to_vec(),
        converged: max.converged && sum.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_pairwise(card: &[usize]) -> Vec<Matrix> {
        let v = card.len();
        pairs(v).map(|(a, b)| Matrix::zeros(card[a], card[b])).collect()
    }

    #[test]
    fn single_free_node_hand_marginals() {
        let unary = vec![vec![3f64.ln(), 0.0]];
        let pot = Potentials::new(unary, Cow::Owned(Vec::new()));
        let r = exhaustive_potentials(&pot).unwrap();
        assert!((r.marginals[0][0] - 0.75).abs() < 1e-12);
        assert!((r.marginals[0][1] - 0.25).abs() < 1e-12);
        assert!((r.log_partition - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_prefers_lowest_indices() {
        let card = [3, 2, 4];
        let unary = card.iter().map(|&c| vec![0.0; c]).collect();
        let pot = Potentials::new(unary, Cow::Owned(zero_pairwise(&card)));
        let r = exhaustive_potentials(&pot).unwrap();
        assert_eq!(r.map, vec![0, 0, 0]);
        let bp = loopy_bp_potentials(&pot, Mode::Sum, &InferenceOptions::default());
        for (m, &c) in bp.marginals.iter().zip(&card) {
            for p in m {
                assert!((p - 1.0 / c as f64).abs() < 1e-12);
            }
        }
        assert_eq!(loopy_bp_potentials(&pot, Mode::Max, &InferenceOptions::default()).map, vec![0, 0, 0]);
    }

    #[test]
    fn fully_clamped_gives_deltas() {
        let card = [2, 3];
        let mut unary = vec![vec![0.1, 0.4], vec![0.0, 0.3, -0.2]];
        unary[0][0] = f64::NEG_INFINITY;
        unary[1][0] = f64::NEG_INFINITY;
        unary[1][1] = f64::NEG_INFINITY;
        let pot = Potentials::new(unary, Cow::Owned(zero_pairwise(&card)));
        let r = exhaustive_potentials(&pot).unwrap();
        assert_eq!(r.map, vec![1, 2]);
        assert_eq!(r.marginals, vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]]);
        let bp = loopy_bp_potentials(&pot, Mode::Sum, &InferenceOptions::default());
        assert_eq!(bp.marginals, vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn too_large_space_is_rejected() {
        let card = [1000, 1000, 1000];
        let unary = card.iter().map(|&c| vec![0.0; c]).collect();
        let pot = Potentials::new(unary, Cow::Owned(zero_pairwise(&card)));
        assert!(matches!(exhaustive_potentials(&pot), Err(Error::StateSpaceTooLarge(_))));
    }

    #[test]
    fn topic_selection_hand_cases() {
        assert_eq!(select_topic_from_posteriors(&[vec![0.7, 0.3]]), Some(0));
        assert_eq!(select_topic_from_posteriors(&[vec![0.6, 0.4], vec![0.2, 0.9]]), Some(1));
        assert_eq!(select_topic_from_posteriors(&[vec![0.5, 0.5], vec![0.5, 0.5]]), Some(0));
        assert_eq!(select_topic_from_posteriors(&[]), None);
    }
}
