//! Word lattices over the source-side tokens of uncertain SRs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::translation::source::state_tokens;

const MODULE: &str = "lattice_decoder";

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeEdge {
    pub from: usize,
    pub to: usize,
    pub word: String,
    /// Natural-log confidence, `<= 0`.
    pub log_conf: f64,
}

/// A DAG whose nodes are numbered in topological order; node 0 is the start
/// and the last node the end.
#[derive(Clone, Debug, PartialEq)]
pub struct WordLattice {
    num_nodes: usize,
    edges: Vec<LatticeEdge>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LatticeOptions {
    pub top_k: usize,
    pub prune: f64,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            top_k: 5,
            prune: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LatticeStats {
    pub nodes: usize,
    pub edges: usize,
    pub paths: f64,
}

impl WordLattice {
    /// Builds a lattice from explicit edges and checks it.
    pub fn new(num_nodes: usize, mut edges: Vec<LatticeEdge>) -> Result<Self> {
        edges.sort_by_key(|e| (e.from, e.to));
        let lattice = WordLattice { num_nodes, edges };
        lattice.validate()?;
        Ok(lattice)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn end(&self) -> usize {
        self.num_nodes - 1
    }

    pub fn edges(&self) -> &[LatticeEdge] {
        &self.edges
    }

    /// Indices of the edges leaving `node`.
    pub fn outgoing(&self, node: usize) -> std::ops::Range<usize> {
        let lo = self.edges.partition_point(|e| e.from < node);
        let hi = self.edges.partition_point(|e| e.from <= node);
        lo..hi
    }

    /// Acyclic in node order, every node on some start-to-end path,
    /// confidences non-positive.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::module(MODULE, format!("invalid lattice: {m}")));
        if self.num_nodes < 2 {
            return fail("needs at least a start and an end node".into());
        }
        for e in &self.edges {
            if e.to >= self.num_nodes || e.from >= e.to {
                return fail(format!("edge {}->{} breaks topological order", e.from, e.to));
            }
            if e.log_conf.is_nan() || e.log_conf > 0.0 {
                return fail(format!("edge {}->{} has confidence {}", e.from, e.to, e.log_conf));
            }
            if e.word.is_empty() || e.word.contains(char::is_whitespace) {
                return fail(format!("edge {}->{} has word {:?}", e.from, e.to, e.word));
            }
        }
        let mut reach = vec![false; self.num_nodes];
        reach[0] = true;
        for e in &self.edges {
            if reach[e.from] {
                reach[e.to] = true;
            }
        }
        let mut coreach = vec![false; self.num_nodes];
        coreach[self.end()] = true;
        for e in self.edges.iter().rev() {
            if coreach[e.to] {
                coreach[e.from] = true;
            }
        }
        if let Some(n) = (0..self.num_nodes).find(|&n| !reach[n] || !coreach[n]) {
            return fail(format!("node {n} is not on a start-to-end path"));
        }
        Ok(())
    }

    pub fn stats(&self) -> LatticeStats {
        let mut paths = vec![0.0; self.num_nodes];
        paths[0] = 1.0;
        for e in &self.edges {
            paths[e.to] += paths[e.from];
        }
        LatticeStats {
            nodes: self.num_nodes,
            edges: self.edges.len(),
            paths: paths[self.end()],
        }
    }

    /// Edge indices of the most confident start-to-end path; ties go to the
    /// earlier edge.
    pub fn best_path(&self) -> Vec<usize> {
        let mut best = vec![f64::NEG_INFINITY; self.num_nodes];
        let mut back = vec![usize::MAX; self.num_nodes];
        best[0] = 0.0;
        for (i, e) in self.edges.iter().enumerate() {
            let s = best[e.from] + e.log_conf;
            if s > best[e.to] || back[e.to] == usize::MAX {
                best[e.to] = s;
                back[e.to] = i;
            }
        }
        let mut path = Vec::new();
        let mut node = self.end();
        while node != 0 {
            let i = back[node];
            path.push(i);
            node = self.edges[i].from;
        }
        path.reverse();
        path
    }

    /// Single-path lattice keeping only the given edges and their confidences.
    pub fn restrict(&self, path: &[usize]) -> Result<WordLattice> {
        let edges = path
            .iter()
            .enumerate()
            .map(|(k, &i)| LatticeEdge {
                from: k,
                to: k + 1,
                ..self.edges[i].clone()
            })
            .collect();
        WordLattice::new(path.len() + 1, edges)
    }

    /// Every start-to-end path as a list of edge indices.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if node == self.end() {
                out.push(path);
                continue;
            }
            for i in self.outgoing(node).rev() {
                let mut p = path.clone();
                p.push(i);
                stack.push((self.edges[i].to, p));
            }
        }
        out
    }

    /// PLF text: one group per non-final node listing its outgoing edges as
    /// `('word',log_conf,distance)`.
    pub fn to_plf(&self) -> String {
        let mut out = String::from("(");
        for node in 0..self.end() {
            out.push('(');
            for i in self.outgoing(node) {
                let e = &self.edges[i];
                let word = e.word.replace('\\', "\\\\").replace('\'', "\\'");
                write!(out, "('{}',{},{}),", word, e.log_conf, e.to - e.from).unwrap();
            }
            out.push_str("),");
        }
        out.push(')');
        out
    }

    pub fn from_plf(text: &str) -> Result<WordLattice> {
        let groups = PlfParser::new(text).lattice()?;
        let num_nodes = groups.len() + 1;
        let mut edges = Vec::new();
        for (from, group) in groups.into_iter().enumerate() {
            for (word, log_conf, dist) in group {
                if dist == 0 {
                    return Err(Error::module(MODULE, "PLF edge with distance 0"));
                }
                edges.push(LatticeEdge {
                    from,
                    to: from + dist,
                    word,
                    log_conf,
                });
            }
        }
        WordLattice::new(num_nodes, edges)
    }
}

type PlfGroup = Vec<(String, f64, usize)>;

struct PlfParser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> PlfParser<'a> {
    fn new(text: &'a str) -> Self {
        PlfParser {
            text: text.trim().as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, what: &str) -> Error {
        Error::module(MODULE, format!("PLF parse error at byte {}: {what}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {:?}", c as char)))
        }
    }

    /// Parses `(item,item,...)` with an optional trailing comma.
    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.expect(b'(')?;
        let mut out = Vec::new();
        loop {
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(out);
            }
            out.push(item(self)?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(self.err("expected ',' or ')'")),
            }
        }
    }

    fn lattice(&mut self) -> Result<Vec<PlfGroup>> {
        let groups = self.list(|p| p.list(Self::edge))?;
        if self.peek().is_some() {
            return Err(self.err("trailing input"));
        }
        Ok(groups)
    }

    fn edge(&mut self) -> Result<(String, f64, usize)> {
        self.expect(b'(')?;
        let word = self.quoted()?;
        self.expect(b',')?;
        let conf = self.token()?.parse::<f64>().map_err(|e| self.err(&e.to_string()))?;
        self.expect(b',')?;
        let dist = self.token()?.parse::<usize>().map_err(|e| self.err(&e.to_string()))?;
        if self.peek() == Some(b',') {
            self.pos += 1;
        }
        self.expect(b')')?;
        Ok((word, conf, dist))
    }

    fn quoted(&mut self) -> Result<String> {
        self.expect(b'\'')?;
        let mut bytes = Vec::new();
        loop {
            match self.text.get(self.pos).copied() {
                None => return Err(self.err("unterminated string")),
                Some(b'\'') => {
                    self.pos += 1;
                    break;
                }
                Some(b'\\') => {
                    let c = self.text.get(self.pos + 1).copied().ok_or_else(|| self.err("dangling escape"))?;
                    bytes.push(c);
                    self.pos += 2;
                }
                Some(c) => {
                    bytes.push(c);
                    self.pos += 1;
                }
            }
        }
        String::from_utf8(bytes).map_err(|_| self.err("invalid UTF-8"))
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && !matches!(self.text[self.pos], b',' | b')') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .map(str::trim)
            .map_err(|_| self.err("invalid UTF-8"))
    }
}

/// States kept for one node: the top `k` by probability (lower index first
/// on ties) with probability at least `prune`, or the single best if none
/// qualifies.
pub fn kept_states(probs: &[f64], opts: &LatticeOptions) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .take(opts.top_k.max(1))
        .filter(|&s| probs[s] >= opts.prune)
        .collect();
    if kept.is_empty() {
        order.truncate(1);
        order
    } else {
        kept
    }
}

/// One section per SR node, concatenated in node order. Each kept state is a
/// branch spelling its source tokens, with the state's log marginal on the
/// branch's first edge.
pub fn build_lattice(marginals: &[Vec<f64>], schema: &Schema, opts: &LatticeOptions) -> Result<WordLattice> {
    if marginals.len() != schema.num_nodes() {
        return Err(Error::module(MODULE, "one marginal vector per SR node required"));
    }
    let mut edges = Vec::new();
    let mut section_start = 0;
    let mut next = 1;
    for (n, probs) in marginals.iter().enumerate() {
        if probs.len() != schema.num_states(n) {
            return Err(Error::module(MODULE, format!("marginal of node {n} has the wrong length")));
        }
        let branches: Vec<(Vec<String>, f64)> = kept_states(probs, opts)
            .into_iter()
            .map(|s| (state_tokens(schema, n, s), probs[s].ln()))
            .collect();
        let inner: usize = branches.iter().map(|(t, _)| t.len() - 1).sum();
        let section_end = next + inner;
        for (tokens, conf) in branches {
            let mut from = section_start;
            for (i, word) in tokens.iter().enumerate() {
                let to = if i + 1 == tokens.len() {
                    section_end
                } else {
                    next += 1;
                    next - 1
                };
                edges.push(LatticeEdge {
                    from,
                    to,
                    word: word.clone(),
                    log_conf: if i == 0 { conf } else { 0.0 },
                });
                from = to;
            }
        }
        section_start = section_end;
        next = section_end + 1;
    }
    WordLattice::new(section_start + 1, edges)
}

/// One lattice per line in PLF.
pub fn write_lattices(path: &Path, lattices: &[WordLattice]) -> Result<()> {
    let text: String = lattices.iter().map(|l| l.to_plf() + "\n").collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_lattices(path: &Path) -> Result<Vec<WordLattice>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            WordLattice::from_plf(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SemanticRepresentation;
    use crate::schema::{NodeSpec, EMPTY};
    use crate::translation::source::sr_to_source;

    fn schema() -> Schema {
        let node = |name: &str, states: &[&str]| NodeSpec {
            name: name.into(),
            states: std::iter::once(EMPTY).chain(states.iter().copied()).map(String::from).collect(),
        };
        Schema::new(
            vec![
                node("activity", &["cut-off", "wash"]),
                node("tool", &["knife"]),
                node("object", &["egg-shells", "cucumber"]),
                node("source", &["fridge"]),
                node("target", &["cutting-board"]),
            ],
            vec!["salad".into()],
            None,
        )
        .unwrap()
    }

    fn delta(n: usize, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[s] = 1.0;
        v
    }

    fn path_words(l: &WordLattice, p: &[usize]) -> String {
        p.iter().map(|&i| l.edges()[i].word.as_str()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn delta_marginals_give_the_source_string() {
        let s = schema();
        let states = vec![1, 0, 2, 1, 1];
        let m: Vec<Vec<f64>> = states.iter().enumerate().map(|(n, &k)| delta(s.num_states(n), k)).collect();
        let l = build_lattice(&m, &s, &LatticeOptions::default()).unwrap();
        let paths = l.paths();
        assert_eq!(paths.len(), 1);
        let src = sr_to_source(&SemanticRepresentation::new(states), &s).join(" ");
        assert_eq!(path_words(&l, &paths[0]), src);
        assert!(l.edges().iter().all(|e| e.log_conf == 0.0));
    }

    #[test]
    fn binary_object_branch() {
        let s = schema();
        let mut m: Vec<Vec<f64>> = [1, 0, 0, 0, 0].iter().enumerate().map(|(n, &k)| delta(s.num_states(n), k)).collect();
        m[2] = vec![0.0, 0.6, 0.4];
        let l = build_lattice(&m, &s, &LatticeOptions::default()).unwrap();
        let mut found: Vec<(String, f64)> = l
            .paths()
            .iter()
            .map(|p| (path_words(&l, p), p.iter().map(|&i| l.edges()[i].log_conf).sum()))
            .collect();
        found.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].0, "cut off null1 cucumber null3 null4");
        assert!((found[0].1 - 0.4f64.ln()).abs() < 1e-15);
        assert_eq!(found[1].0, "cut off null1 egg shells null3 null4");
        assert!((found[1].1 - 0.6f64.ln()).abs() < 1e-15);
        assert_eq!(path_words(&l, &l.best_path()), found[1].0);
    }

    #[test]
    fn top_one_is_the_map_path() {
        let s = schema();
        let m = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4], vec![0.1, 0.3, 0.6], vec![0.5, 0.5], vec![0.3, 0.7]];
        let l = build_lattice(&m, &s, &LatticeOptions { top_k: 1, prune: 0.01 }).unwrap();
        let paths = l.paths();
        assert_eq!(paths.len(), 1);
        assert_eq!(path_words(&l, &paths[0]), "cut off null1 cucumber null3 cutting board");
    }

    #[test]
    fn pruning_keeps_top_one_when_all_fall_below() {
        assert_eq!(kept_states(&[0.004, 0.003, 0.003], &LatticeOptions::default()), vec![0]);
        assert_eq!(kept_states(&[0.2, 0.5, 0.3], &LatticeOptions { top_k: 2, prune: 0.25 }), vec![1, 2]);
    }

    #[test]
    fn section_confidences_stay_subnormalized() {
        let s = schema();
        let m = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4], vec![0.1, 0.3, 0.6], vec![0.5, 0.5], vec![0.3, 0.7]];
        let l = build_lattice(&m, &s, &LatticeOptions::default()).unwrap();
        let total: f64 = l.paths().iter().map(|p| p.iter().map(|&i| l.edges()[i].log_conf).sum::<f64>().exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(l.stats().paths, 3.0 * 2.0 * 3.0 * 2.0 * 2.0);
    }

    #[test]
    fn plf_round_trip() {
        let s = schema();
        let m = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4], vec![0.1, 0.3, 0.6], vec![0.5, 0.5], vec![0.3, 0.7]];
        let l = build_lattice(&m, &s, &LatticeOptions::default()).unwrap();
        let text = l.to_plf();
        assert_eq!(WordLattice::from_plf(&text).unwrap(), l);
        let odd = WordLattice::new(
            2,
            vec![LatticeEdge { from: 0, to: 1, word: "it's\\".into(), log_conf: -0.5 }],
        )
        .unwrap();
        assert_eq!(WordLattice::from_plf(&odd.to_plf()).unwrap(), odd);
    }

    #[test]
    fn invalid_lattices_are_rejected() {
        let e = |from, to| LatticeEdge { from, to, word: "w".into(), log_conf: 0.0 };
        assert!(WordLattice::new(3, vec![e(0, 2)]).is_err());
        assert!(WordLattice::new(2, vec![e(1, 0)]).is_err());
        assert!(WordLattice::new(2, vec![LatticeEdge { log_conf: 0.1, ..e(0, 1) }]).is_err());
    }
}
