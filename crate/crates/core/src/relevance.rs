//! Topic-specific tf-idf relevance of decoded segments, top-n selection for
//! shorter descriptions, and the nearest-video retrieval baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Level, SemanticRepresentation, VideoRecord};
use crate::error::{Error, Result};
use crate::schema::{NodeSpec, Schema};

const MODULE: &str = "relevance";

/// State-by-topic occurrence counts with the derived tf-idf values.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfTable {
    nodes: Vec<NodeSpec>,
    topics: Vec<String>,
    /// `[node][state][topic]`
    counts: Vec<Vec<Vec<u64>>>,
    tfidf: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    nodes: Vec<NodeSpec>,
    topics: Vec<String>,
    counts: Vec<Vec<Vec<u64>>>,
}

impl TfidfTable {
    /// Builds the table from raw counts indexed `[node][state][topic]`.
    pub fn from_counts(schema: &Schema, counts: Vec<Vec<Vec<u64>>>) -> Result<Self> {
        let shape_ok = counts.len() == schema.num_nodes()
            && counts.iter().enumerate().all(|(n, c)| {
                c.len() == schema.num_states(n) && c.iter().all(|t| t.len() == schema.num_topics())
            });
        if !shape_ok {
            return Err(Error::module(MODULE, "count table does not match the schema"));
        }
        Ok(Self::from_parts(schema.nodes().to_vec(), schema.topics().to_vec(), counts))
    }

    fn from_parts(nodes: Vec<NodeSpec>, topics: Vec<String>, counts: Vec<Vec<Vec<u64>>>) -> Self {
        let num_topics = topics.len();
        let tfidf = counts
            .iter()
            .map(|node| {
                let max_per_topic: Vec<u64> = (0..num_topics)
                    .map(|t| node.iter().map(|s| s[t]).max().unwrap_or(0))
                    .collect();
                node.iter()
                    .map(|per_topic| {
                        let support = per_topic.iter().filter(|&&c| c > 0).count();
                        (0..num_topics)
                            .map(|t| {
                                if support == 0 || max_per_topic[t] == 0 {
                                    0.0
                                } else {
                                    let tf = per_topic[t] as f64 / max_per_topic[t] as f64;
                                    tf * (num_topics as f64 / support as f64).ln()
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        TfidfTable {
            nodes,
            topics,
            counts,
            tfidf,
        }
    }

    pub fn tfidf(&self, node: usize, state: usize, topic: usize) -> f64 {
        self.tfidf[node][state][topic]
    }

    pub fn count(&self, node: usize, state: usize, topic: usize) -> u64 {
        self.counts[node][state][topic]
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    /// Whether a state was ever observed with a topic in training.
    pub fn seen_in(&self, node: usize, state: usize, topic: usize) -> bool {
        self.counts[node][state][topic] > 0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile {
            nodes: self.nodes.clone(),
            topics: self.topics.clone(),
            counts: self.counts.clone(),
        };
        let text = serde_json::to_string(&file).expect("table serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, schema: &Schema) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TableFile = serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        if file.nodes != schema.nodes() || file.topics != schema.topics() {
            return Err(Error::artifact(path, "table was built for a different schema"));
        }
        Self::from_counts(schema, file.counts).map_err(|e| Error::artifact(path, e.to_string()))
    }
}

/// Counts per-segment occurrences of every node state under each gold topic.
pub fn build_tfidf(train: &Dataset) -> Result<TfidfTable> {
    let schema = &train.schema;
    let mut counts: Vec<Vec<Vec<u64>>> = (0..schema.num_nodes())
        .map(|n| vec![vec![0; schema.num_topics()]; schema.num_states(n)])
        .collect();
    let mut any = false;
    for (_, seg) in train.segments() {
        let Some(sr) = &seg.gold else { continue };
        let Some(t) = sr.topic else { continue };
        any = true;
        for (n, &s) in sr.states.iter().enumerate() {
            counts[n][s][t] += 1;
        }
    }
    if !any {
        return Err(Error::module(MODULE, "no labeled segments with a topic"));
    }
    TfidfTable::from_counts(schema, counts)
}

/// Relevance of an SR for a topic: the sum of its states' tf-idf values.
pub fn score_segment(sr: &SemanticRepresentation, topic: usize, table: &TfidfTable) -> Result<f64> {
    if topic >= table.num_topics() {
        return Err(Error::module(MODULE, format!("unknown topic {topic}")));
    }
    if sr.states.len() != table.counts.len() {
        return Err(Error::module(MODULE, "SR does not match the table"));
    }
    Ok(sr.states.iter().enumerate().map(|(n, &s)| table.tfidf(n, s, topic)).sum())
}

/// Indices of the `n` highest scores (earlier wins ties), in temporal order.
pub fn select_top_segments(scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n.max(1));
    order.sort_unstable();
    order
}

/// Single-sentence reference of the training video whose topic scores are
/// closest to the test video's, preferring videos of the selected dish.
pub fn retrieve_nearest_sentence(test: &VideoRecord, topic: usize, train: &Dataset) -> Result<String> {
    let with_sentence: Vec<&VideoRecord> = train
        .videos
        .iter()
        .filter(|v| !v.sentences.get(Level::Single).is_empty())
        .collect();
    if with_sentence.is_empty() {
        return Err(Error::module(MODULE, "no training video has a single-sentence reference"));
    }
    let same_dish: Vec<&VideoRecord> = with_sentence.iter().copied().filter(|v| v.dish == Some(topic)).collect();
    let pool = if same_dish.is_empty() { &with_sentence } else { &same_dish };
    let dist = |v: &VideoRecord| -> f64 {
        v.topic_scores
            .iter()
            .zip(&test.topic_scores)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut best = pool[0];
    let mut best_d = dist(best);
    for &v in &pool[1..] {
        let d = dist(v);
        if d < best_d {
            best = v;
            best_d = d;
        }
    }
    Ok(best.sentences.get(Level::Single)[0].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::EMPTY;

    fn schema() -> Schema {
        let node = |name: &str, states: &[&str]| NodeSpec {
            name: name.into(),
            states: std::iter::once(EMPTY).chain(states.iter().copied()).map(String::from).collect(),
        };
        Schema::new(
            vec![
                node("activity", &["cut"]),
                node("tool", &[]),
                node("object", &["carrot", "knife", "orange"]),
                node("source", &[]),
                node("target", &[]),
            ],
            vec!["t1".into(), "t2".into()],
            None,
        )
        .unwrap()
    }

    /// Object counts: t1 carrot=4 knife=2; t2 orange=3 knife=3. Activity
    /// `cut` appears 5 times, only in t1.
    fn table() -> TfidfTable {
        let s = schema();
        let mut counts: Vec<Vec<Vec<u64>>> =
            (0..s.num_nodes()).map(|n| vec![vec![0; 2]; s.num_states(n)]).collect();
        counts[2][1] = vec![4, 0];
        counts[2][2] = vec![2, 3];
        counts[2][3] = vec![0, 3];
        // EMPTY everywhere for the other nodes, in both topics.
        for n in [0, 1, 3, 4] {
            counts[n][0] = vec![6, 6];
        }
        counts[0][1] = vec![5, 0];
        TfidfTable::from_counts(&s, counts).unwrap()
    }

    #[test]
    fn hand_values() {
        let t = table();
        assert!((t.tfidf(2, 1, 0) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(t.tfidf(2, 2, 0), 0.0);
        assert_eq!(t.tfidf(2, 2, 1), 0.0);
        assert_eq!(t.tfidf(2, 1, 1), 0.0);
        assert!((t.tfidf(2, 3, 1) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(t.tfidf(1, 0, 0), 0.0);
    }

    #[test]
    fn doubling_counts_is_invariant() {
        let t = table();
        let doubled: Vec<Vec<Vec<u64>>> = t
            .counts
            .iter()
            .map(|n| n.iter().map(|s| s.iter().map(|c| 2 * c).collect()).collect())
            .collect();
        let d = TfidfTable::from_counts(&schema(), doubled).unwrap();
        assert_eq!(d.tfidf, t.tfidf);
    }

    #[test]
    fn segment_score_sums_table() {
        let s = schema();
        let t = table();
        // (cut, EMPTY, carrot, EMPTY, EMPTY): tfidf(cut, t1) = (5/6) ln 2.
        let sr = SemanticRepresentation::from_labels(&s, &["cut", EMPTY, "carrot", EMPTY, EMPTY]).unwrap();
        let expected = 5.0 / 6.0 * 2f64.ln() + 2f64.ln();
        assert!((score_segment(&sr, 0, &t).unwrap() - expected).abs() < 1e-12);
        assert!(score_segment(&sr, 7, &t).is_err());
        let empty = SemanticRepresentation::empty(&s);
        assert_eq!(score_segment(&empty, 0, &t).unwrap(), 0.0);
    }

    #[test]
    fn top_segments_keep_temporal_order() {
        let scores = [0.1, 0.9, 0.5, 0.9];
        assert_eq!(select_top_segments(&scores, 3), vec![1, 2, 3]);
        assert_eq!(select_top_segments(&scores, 1), vec![1]);
        assert_eq!(select_top_segments(&scores, 10), vec![0, 1, 2, 3]);
        assert_eq!(select_top_segments(&[0.4, 0.2], 2), vec![0, 1]);
    }
}
