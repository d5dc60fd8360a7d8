//! Fully connected CRF over the SR nodes plus a video-level topic node.
//!
//! Energies are log-potentials: `p(assignment) ∝ exp(E)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SegmentObservation, SemanticRepresentation, VideoRecord};
use crate::error::{Error, Result};
use crate::schema::{NodeId, Schema};

pub const MODEL_VERSION: &str = "crf-v1";

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryMode {
    /// Per-state weight vectors dotted with the full attribute score vector.
    Attribute,
    /// One scalar per node scaling that node's own per-state classifier scores.
    #[default]
    Semantic,
}

/// Number of unordered pairs among `v` variables.
pub fn num_pairs(v: usize) -> usize {
    v * v.saturating_sub(1) / 2
}

/// Index of the unordered pair `{a, b}` (`a != b`) among `v` variables.
pub fn pair_index(v: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    debug_assert!(b < v && a != b);
    a * v - a * (a + 1) / 2 + (b - a - 1)
}

/// All unordered pairs `(a, b)` with `a < b`, in [`pair_index`] order.
pub fn pairs(v: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..v).flat_map(move |a| (a + 1..v).map(move |b| (a, b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    version: String,
    schema: Schema,
    unary_mode: UnaryMode,
    attribute_dim: usize,
    /// Attribute mode: per SR node, `[states × attribute_dim]`.
    attribute_weights: Vec<Matrix>,
    /// Semantic mode: one scalar per SR node.
    semantic_weights: Vec<f64>,
    topic_weight: f64,
    /// Pairwise tables indexed by [`pair_index`]; the row variable is the
    /// smaller index of the pair.
    pairwise: Vec<Matrix>,
    reg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_objective: Option<f64>,
}

impl CrfModel {
    /// All-zero weights, topic unary scale 1.
    pub fn new(schema: Schema, unary_mode: UnaryMode, attribute_dim: usize) -> Result<Self> {
        if unary_mode == UnaryMode::Attribute && attribute_dim == 0 {
            return Err(Error::InvalidArgument(
                "attribute mode needs a positive attribute dimension".into(),
            ));
        }
        let card = schema.cardinalities();
        let v = card.len();
        let attribute_weights = match unary_mode {
            UnaryMode::Attribute => (0..schema.num_nodes())
                .map(|n| Matrix::zeros(card[n], attribute_dim))
                .collect(),
            UnaryMode::Semantic => Vec::new(),
        };
        let semantic_weights = match unary_mode {
            UnaryMode::Attribute => Vec::new(),
            UnaryMode::Semantic => vec![0.0; schema.num_nodes()],
        };
        let pairwise = pairs(v).map(|(a, b)| Matrix::zeros(card[a], card[b])).collect();
        Ok(CrfModel {
            version: MODEL_VERSION.into(),
            unary_mode,
            attribute_dim: if unary_mode == UnaryMode::Attribute { attribute_dim } else { 0 },
            attribute_weights,
            semantic_weights,
            topic_weight: 1.0,
            pairwise,
            reg: 0.01,
            final_objective: None,
            schema,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn unary_mode(&self) -> UnaryMode {
        self.unary_mode
    }

    pub fn attribute_dim(&self) -> usize {
        self.attribute_dim
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn set_reg(&mut self, reg: f64) {
        assert!(reg >= 0.0 && reg.is_finite(), "regularization must be finite and nonnegative");
        self.reg = reg;
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.final_objective
    }

    pub(crate) fn set_final_objective(&mut self, v: f64) {
        self.final_objective = Some(v);
    }

    pub fn num_variables(&self) -> usize {
        self.schema.num_variables()
    }

    pub fn topic_weight(&self) -> f64 {
        self.topic_weight
    }

    pub fn set_topic_weight(&mut self, w: f64) {
        self.topic_weight = w;
    }

    pub fn semantic_weight(&self, node: usize) -> f64 {
        self.semantic_weights[node]
    }

    pub fn set_semantic_weight(&mut self, node: usize, w: f64) {
        self.semantic_weights[node] = w;
    }

    pub fn attribute_weights_mut(&mut self, node: usize) -> &mut Matrix {
        &mut self.attribute_weights[node]
    }

    pub fn attribute_weights(&self, node: usize) -> &Matrix {
        &self.attribute_weights[node]
    }

    /// Pairwise table between two variables, rows indexed by the smaller one.
    pub fn pair_table(&self, a: usize, b: usize) -> &Matrix {
        &self.pairwise[pair_index(self.num_variables(), a, b)]
    }

    fn check_state(&self, node: NodeId, state: usize) -> Result<usize> {
        let var = self.checked_variable(node)?;
        let card = self.schema.cardinalities()[var];
        if state >= card {
            return Err(Error::InvalidArgument(format!(
                "state {state} out of range for {node} with {card} states"
            )));
        }
        Ok(var)
    }

    fn checked_variable(&self, node: NodeId) -> Result<usize> {
        match node {
            NodeId::Sr(n) if n >= self.schema.num_nodes() => {
                Err(Error::InvalidArgument(format!("no SR node {n}")))
            }
            _ => Ok(self.schema.variable(node)),
        }
    }

    pub fn set_pairwise(&mut self, n: NodeId, sn: usize, k: NodeId, sk: usize, value: f64) -> Result<()> {
        let a = self.check_state(n, sn)?;
        let b = self.check_state(k, sk)?;
        if a == b {
            return Err(Error::InvalidArgument("pairwise weight needs two distinct nodes".into()));
        }
        let idx = pair_index(self.num_variables(), a, b);
        let (r, c) = if a < b { (sn, sk) } else { (sk, sn) };
        self.pairwise[idx].set(r, c, value);
        Ok(())
    }

    pub fn pairwise_energy(&self, n: NodeId, sn: usize, k: NodeId, sk: usize) -> Result<f64> {
        let a = self.check_state(n, sn)?;
        let b = self.check_state(k, sk)?;
        if a == b {
            return Err(Error::InvalidArgument("pairwise energy needs two distinct nodes".into()));
        }
        Ok(self.pairwise_var(a, sn, b, sk))
    }

    #[inline]
    pub(crate) fn pairwise_var(&self, a: usize, sa: usize, b: usize, sb: usize) -> f64 {
        let m = &self.pairwise[pair_index(self.num_variables(), a, b)];
        if a < b {
            m.get(sa, sb)
        } else {
            m.get(sb, sa)
        }
    }

    pub fn unary_energy(
        &self,
        node: NodeId,
        state: usize,
        seg: &SegmentObservation,
        vid: &VideoRecord,
    ) -> Result<f64> {
        self.check_state(node, state)?;
        match node {
            NodeId::Topic => {
                let s = vid.topic_scores.get(state).ok_or_else(|| {
                    Error::InvalidArgument(format!("video {} lacks topic scores", vid.video_id))
                })?;
                Ok(self.topic_weight * s)
            }
            NodeId::Sr(n) => match self.unary_mode {
                UnaryMode::Attribute => {
                    let x = self.attribute_scores(seg)?;
                    Ok(dot(self.attribute_weights[n].row(state), x))
                }
                UnaryMode::Semantic => {
                    let x = self.node_state_scores(seg)?;
                    Ok(self.semantic_weights[n] * x[n][state])
                }
            },
        }
    }

    pub(crate) fn attribute_scores<'a>(&self, seg: &'a SegmentObservation) -> Result<&'a [f64]> {
        let x = seg.attribute_scores.as_deref().ok_or_else(|| Error::MissingScores {
            segment_id: seg.segment_id.clone(),
            family: "attribute",
        })?;
        if x.len() != self.attribute_dim {
            return Err(Error::InvalidArgument(format!(
                "segment {} has {} attribute scores, model expects {}",
                seg.segment_id,
                x.len(),
                self.attribute_dim
            )));
        }
        Ok(x)
    }

    pub(crate) fn node_state_scores<'a>(&self, seg: &'a SegmentObservation) -> Result<&'a [Vec<f64>]> {
        let x = seg.node_state_scores.as_deref().ok_or_else(|| Error::MissingScores {
            segment_id: seg.segment_id.clone(),
            family: "node_state",
        })?;
        let ok = x.len() == self.schema.num_nodes()
            && x.iter().enumerate().all(|(n, s)| s.len() == self.schema.num_states(n));
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "segment {} node_state_scores do not match the schema",
                seg.segment_id
            )));
        }
        Ok(x)
    }

    /// Unary log-potentials of every variable, SR nodes then topic.
    pub fn unary_table(&self, seg: &SegmentObservation, vid: &VideoRecord) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.num_variables());
        match self.unary_mode {
            UnaryMode::Attribute => {
                let x = self.attribute_scores(seg)?;
                for w in &self.attribute_weights {
                    out.push((0..w.rows()).map(|s| dot(w.row(s), x)).collect());
                }
            }
            UnaryMode::Semantic => {
                let x = self.node_state_scores(seg)?;
                for (n, scores) in x.iter().enumerate() {
                    let w = self.semantic_weights[n];
                    out.push(scores.iter().map(|s| w * s).collect());
                }
            }
        }
        if vid.topic_scores.len() != self.schema.num_topics() {
            return Err(Error::InvalidArgument(format!(
                "video {} has {} topic scores, schema has {} topics",
                vid.video_id,
                vid.topic_scores.len(),
                self.schema.num_topics()
            )));
        }
        out.push(vid.topic_scores.iter().map(|s| self.topic_weight * s).collect());
        Ok(out)
    }

    /// Energy of a full assignment including the topic.
    pub fn total_energy(
        &self,
        sr: &SemanticRepresentation,
        seg: &SegmentObservation,
        vid: &VideoRecord,
    ) -> Result<f64> {
        let topic = sr
            .topic
            .ok_or_else(|| Error::InvalidArgument("assignment lacks a topic state".into()))?;
        if sr.states.len() != self.schema.num_nodes() {
            return Err(Error::InvalidArgument("partial SR assignment".into()));
        }
        let mut assignment = sr.states.clone();
        assignment.push(topic);
        for (var, &s) in assignment.iter().enumerate() {
            self.check_state(self.schema.node_of_variable(var), s)?;
        }
        let unary = self.unary_table(seg, vid)?;
        Ok(self.assignment_energy(&unary, &assignment))
    }

    /// Energy of a full variable assignment given precomputed unaries.
    pub(crate) fn assignment_energy(&self, unary: &[Vec<f64>], assignment: &[usize]) -> f64 {
        let v = self.num_variables();
        let mut e: f64 = (0..v).map(|i| unary[i][assignment[i]]).sum();
        for (a, b) in pairs(v) {
            e += self.pairwise[pair_index(v, a, b)].get(assignment[a], assignment[b]);
        }
        e
    }

    // -- flat parameter view, shared by training and gradient checks --

    pub fn num_params(&self) -> usize {
        self.attribute_weights.iter().map(|m| m.as_slice().len()).sum::<usize>()
            + self.semantic_weights.len()
            + 1
            + self.pairwise.iter().map(|m| m.as_slice().len()).sum::<usize>()
    }

    /// Parameters in a fixed order: unary weights, topic weight, pairwise.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for m in &self.attribute_weights {
            p.extend_from_slice(m.as_slice());
        }
        p.extend_from_slice(&self.semantic_weights);
        p.push(self.topic_weight);
        for m in &self.pairwise {
            p.extend_from_slice(m.as_slice());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let mut rest = p;
        for m in &mut self.attribute_weights {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
        let n = self.semantic_weights.len();
        self.semantic_weights.copy_from_slice(&rest[..n]);
        rest = &rest[n..];
        self.topic_weight = rest[0];
        rest = &rest[1..];
        for m in &mut self.pairwise {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
    }

    /// Offset of the first pairwise parameter in [`CrfModel::params`].
    pub(crate) fn pairwise_offset(&self) -> usize {
        self.attribute_weights.iter().map(|m| m.as_slice().len()).sum::<usize>()
            + self.semantic_weights.len()
            + 1
    }

    pub fn weights_finite(&self) -> bool {
        self.params().iter().all(|x| x.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: CrfModel =
            serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        model.check_shapes().map_err(|m| Error::artifact(path, m))?;
        Ok(model)
    }

    fn check_shapes(&self) -> std::result::Result<(), String> {
        if self.version != MODEL_VERSION {
            return Err(format!("unsupported version {:?}", self.version));
        }
        let card = self.schema.cardinalities();
        let v = card.len();
        let unary_ok = match self.unary_mode {
            UnaryMode::Attribute => {
                self.attribute_weights.len() == self.schema.num_nodes()
                    && self.semantic_weights.is_empty()
                    && self.attribute_weights.iter().enumerate().all(|(n, m)| {
                        m.rows == card[n] && m.cols == self.attribute_dim && m.data.len() == m.rows * m.cols
                    })
            }
            UnaryMode::Semantic => {
                self.attribute_weights.is_empty() && self.semantic_weights.len() == self.schema.num_nodes()
            }
        };
        if !unary_ok {
            return Err("unary weight shapes do not match the schema".into());
        }
        if self.pairwise.len() != num_pairs(v)
            || !pairs(v).zip(&self.pairwise).all(|((a, b), m)| {
                m.rows == card[a] && m.cols == card[b] && m.data.len() == m.rows * m.cols
            })
        {
            return Err("pairwise weight shapes do not match the schema".into());
        }
        if !self.weights_finite() {
            return Err("non-finite weight".into());
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
