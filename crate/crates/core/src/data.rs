//! Corpus records and the line-delimited JSON dataset format.
//!
//! A dataset file holds one JSON object per line, told apart by `kind`:
//! an optional `dataset` header carrying the split, then `video`,
//! `segment` and `frames` records. Segments and frame streams refer to
//! their video by `video_id` and may appear in any order relative to it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Schema;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

/// Level of detail of a description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Detailed,
    Short,
    Single,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Detailed, Level::Short, Level::Single];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Detailed => "detailed",
            Level::Short => "short",
            Level::Single => "single",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detailed" => Ok(Level::Detailed),
            "short" => Ok(Level::Short),
            "single" => Ok(Level::Single),
            _ => Err(Error::InvalidArgument(format!("unknown level {s:?}"))),
        }
    }
}

/// Reference sentences at each level of detail.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSentences {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detailed: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub short: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub single: Vec<String>,
}

impl LevelSentences {
    pub fn get(&self, level: Level) -> &[String] {
        match level {
            Level::Detailed => &self.detailed,
            Level::Short => &self.short,
            Level::Single => &self.single,
        }
    }

    pub fn get_mut(&mut self, level: Level) -> &mut Vec<String> {
        match level {
            Level::Detailed => &mut self.detailed,
            Level::Short => &mut self.short,
            Level::Single => &mut self.single,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.detailed.is_empty() && self.short.is_empty() && self.single.is_empty()
    }
}

/// Half-open frame interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameSpan {
    pub start: u64,
    pub end: u64,
}

impl FrameSpan {
    pub fn new(start: u64, end: u64) -> Self {
        FrameSpan { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl Serialize for FrameSpan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for FrameSpan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [start, end] = <[u64; 2]>::deserialize(d)?;
        Ok(FrameSpan { start, end })
    }
}

/// One state index per SR node, plus an optional topic index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemanticRepresentation {
    pub states: Vec<usize>,
    pub topic: Option<usize>,
}

impl SemanticRepresentation {
    pub fn new(states: Vec<usize>) -> Self {
        SemanticRepresentation {
            states,
            topic: None,
        }
    }

    pub fn with_topic(mut self, topic: usize) -> Self {
        self.topic = Some(topic);
        self
    }

    /// Every node in its EMPTY state.
    pub fn empty(schema: &Schema) -> Self {
        SemanticRepresentation::new((0..schema.num_nodes()).map(|n| schema.empty_state(n)).collect())
    }

    pub fn from_labels(schema: &Schema, labels: &[&str]) -> Result<Self> {
        if labels.len() != schema.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "expected {} labels, got {}",
                schema.num_nodes(),
                labels.len()
            )));
        }
        let states = labels
            .iter()
            .enumerate()
            .map(|(n, l)| {
                schema.state_index(n, l).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "unknown label {l:?} for node {}",
                        schema.node_name(n)
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(SemanticRepresentation::new(states))
    }

    pub fn labels<'a>(&self, schema: &'a Schema) -> Vec<&'a str> {
        self.states
            .iter()
            .enumerate()
            .map(|(n, &s)| schema.states(n)[s].as_str())
            .collect()
    }

    pub fn display(&self, schema: &Schema) -> String {
        let mut out = format!("<{}>", self.labels(schema).join(", "));
        if let Some(t) = self.topic {
            out.push_str(&format!(" @ {}", schema.topics()[t]));
        }
        out
    }
}

/// Features and annotation of one video snippet.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentObservation {
    pub segment_id: String,
    pub frames: FrameSpan,
    /// Full attribute classifier score vector.
    pub attribute_scores: Option<Vec<f64>>,
    /// Per SR node, one classifier score per state.
    pub node_state_scores: Option<Vec<Vec<f64>>>,
    pub gold: Option<SemanticRepresentation>,
    pub sentences: LevelSentences,
}

impl SegmentObservation {
    pub fn new(segment_id: impl Into<String>, frames: FrameSpan) -> Self {
        SegmentObservation {
            segment_id: segment_id.into(),
            frames,
            attribute_scores: None,
            node_state_scores: None,
            gold: None,
            sentences: LevelSentences::default(),
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.gold.is_some()
    }
}

/// Per-frame (or per-chunk) score stream of a whole video, the input
/// to temporal segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStream {
    /// Frames covered by each row.
    pub chunk_len: u64,
    pub attribute_scores: Vec<Vec<f64>>,
    /// Indexed `[node][row][state]`.
    pub node_state_scores: Option<Vec<Vec<Vec<f64>>>>,
}

impl FrameStream {
    pub fn num_rows(&self) -> usize {
        self.attribute_scores.len()
    }

    pub fn num_frames(&self) -> u64 {
        self.attribute_scores.len() as u64 * self.chunk_len
    }

    /// Rows overlapping a frame span.
    pub fn rows(&self, span: FrameSpan) -> std::ops::Range<usize> {
        let start = (span.start / self.chunk_len) as usize;
        let end = span.end.div_ceil(self.chunk_len) as usize;
        start.min(self.num_rows())..end.min(self.num_rows())
    }

    /// Mean scores over a span, packaged as a segment observation.
    pub fn observation(&self, segment_id: impl Into<String>, span: FrameSpan) -> SegmentObservation {
        let rows = self.rows(span);
        let mut obs = SegmentObservation::new(segment_id, span);
        obs.attribute_scores = Some(mean_rows(&self.attribute_scores[rows.clone()]));
        obs.node_state_scores = self
            .node_state_scores
            .as_ref()
            .map(|nodes| nodes.iter().map(|r| mean_rows(&r[rows.clone()])).collect());
        obs
    }
}

pub(crate) fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// Gold topic, when known.
    pub dish: Option<usize>,
    /// Topic classifier scores computed on the whole video.
    pub topic_scores: Vec<f64>,
    pub segments: Vec<SegmentObservation>,
    pub sentences: LevelSentences,
    pub frames: Option<FrameStream>,
}

impl VideoRecord {
    pub fn new(video_id: impl Into<String>, topic_scores: Vec<f64>) -> Self {
        VideoRecord {
            video_id: video_id.into(),
            dish: None,
            topic_scores,
            segments: Vec::new(),
            sentences: LevelSentences::default(),
            frames: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub videos: Vec<VideoRecord>,
    pub split: Split,
}

impl Dataset {
    pub fn new(schema: Schema, split: Split) -> Self {
        Dataset {
            schema,
            videos: Vec::new(),
            split,
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = (&VideoRecord, &SegmentObservation)> {
        self.videos
            .iter()
            .flat_map(|v| v.segments.iter().map(move |s| (v, s)))
    }

    /// Appends another dataset's videos; both must share a schema.
    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        if other.schema != self.schema {
            return Err(Error::InvalidArgument("datasets use different schemas".into()));
        }
        self.videos.extend(other.videos);
        Ok(())
    }
}

/// Partitions a video's segments by presence of a gold SR, keeping order.
pub fn split_labeled_unlabeled(
    video: &VideoRecord,
) -> (Vec<&SegmentObservation>, Vec<&SegmentObservation>) {
    video.segments.iter().partition(|s| s.is_labeled())
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    DuplicateVideo,
    DuplicateSegment,
    EmptySpan,
    Order,
    Overlap,
    NoScores,
    AttributeDim,
    NodeDim,
    TopicDim,
    LabelRange,
    NonFinite,
    FrameStream,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub video_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<String>,
    pub detail: String,
}

impl Violation {
    fn into_error(self) -> Error {
        Error::Data {
            video_id: self.video_id,
            segment_id: self.segment_id,
            field: format!("{:?}", self.code),
            message: self.detail,
        }
    }
}

/// Checks every record invariant; returns the violations found.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let schema = &d.schema;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for v in &d.videos {
        let mut push = |code, segment_id: Option<&str>, detail: String| {
            out.push(Violation {
                code,
                video_id: v.video_id.clone(),
                segment_id: segment_id.map(str::to_owned),
                detail,
            })
        };
        if !seen.insert(v.video_id.as_str()) {
            push(ViolationCode::DuplicateVideo, None, "video id repeated".into());
        }
        if v.topic_scores.len() != schema.num_topics() {
            push(
                ViolationCode::TopicDim,
                None,
                format!("topic_scores has {} entries, expected {}", v.topic_scores.len(), schema.num_topics()),
            );
        }
        if v.topic_scores.iter().any(|x| !x.is_finite()) {
            push(ViolationCode::NonFinite, None, "topic_scores".into());
        }
        if v.dish.is_some_and(|t| t >= schema.num_topics()) {
            push(ViolationCode::LabelRange, None, "dish".into());
        }
        let mut seg_ids = HashSet::new();
        for (i, s) in v.segments.iter().enumerate() {
            let sid = Some(s.segment_id.as_str());
            if !seg_ids.insert(s.segment_id.as_str()) {
                push(ViolationCode::DuplicateSegment, sid, "segment id repeated".into());
            }
            if s.frames.is_empty() {
                push(ViolationCode::EmptySpan, sid, format!("{:?}", s.frames));
            }
            if i > 0 {
                let prev = &v.segments[i - 1];
                if prev.frames.start >= s.frames.start {
                    push(ViolationCode::Order, sid, "segments not sorted by start frame".into());
                } else if prev.frames.end > s.frames.start {
                    push(
                        ViolationCode::Overlap,
                        sid,
                        format!("overlaps segment {}", prev.segment_id),
                    );
                }
            }
            if s.attribute_scores.is_none() && s.node_state_scores.is_none() {
                push(ViolationCode::NoScores, sid, "no score family present".into());
            }
            if let Some(a) = &s.attribute_scores {
                if let Some(dim) = schema.attribute_dim() {
                    if a.len() != dim {
                        push(
                            ViolationCode::AttributeDim,
                            sid,
                            format!("{} attribute scores, expected {dim}", a.len()),
                        );
                    }
                }
                if a.iter().any(|x| !x.is_finite()) {
                    push(ViolationCode::NonFinite, sid, "attribute_scores".into());
                }
            }
            if let Some(ns) = &s.node_state_scores {
                if ns.len() != schema.num_nodes() {
                    push(ViolationCode::NodeDim, sid, format!("{} nodes scored", ns.len()));
                } else {
                    for (n, scores) in ns.iter().enumerate() {
                        if scores.len() != schema.num_states(n) {
                            push(
                                ViolationCode::NodeDim,
                                sid,
                                format!(
                                    "node {} has {} scores, expected {}",
                                    schema.node_name(n),
                                    scores.len(),
                                    schema.num_states(n)
                                ),
                            );
                        }
                        if scores.iter().any(|x| !x.is_finite()) {
                            push(ViolationCode::NonFinite, sid, "node_state_scores".into());
                        }
                    }
                }
            }
            if let Some(sr) = &s.gold {
                let bad = sr.states.len() != schema.num_nodes()
                    || sr.states.iter().enumerate().any(|(n, &st)| st >= schema.num_states(n))
                    || sr.topic.is_some_and(|t| t >= schema.num_topics());
                if bad {
                    push(ViolationCode::LabelRange, sid, "gold SR out of range".into());
                }
            }
        }
        if let Some(f) = &v.frames {
            let dims_ok = f.chunk_len > 0
                && !f.attribute_scores.is_empty()
                && f.attribute_scores.iter().all(|r| {
                    Some(r.len()) == schema.attribute_dim().or(Some(f.attribute_scores[0].len()))
                })
                && f.node_state_scores.as_ref().is_none_or(|ns| {
                    ns.len() == schema.num_nodes()
                        && ns.iter().enumerate().all(|(n, rows)| {
                            rows.len() == f.num_rows()
                                && rows.iter().all(|r| r.len() == schema.num_states(n))
                        })
                });
            if !dims_ok {
                push(ViolationCode::FrameStream, None, "frame stream dimensions".into());
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Line format

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Dataset(DatasetLine),
    Video(VideoLine),
    Segment(SegmentLine),
    Frames(FramesLine),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoLine {
    video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dish: Option<String>,
    topic_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "LevelSentences::is_empty")]
    sentences: LevelSentences,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentLine {
    video_id: String,
    segment_id: String,
    frames: FrameSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attribute_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_state_scores: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sr: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "LevelSentences::is_empty")]
    sentences: LevelSentences,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FramesLine {
    video_id: String,
    #[serde(default = "one")]
    chunk_len: u64,
    attribute_scores: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_state_scores: Option<BTreeMap<String, Vec<Vec<f64>>>>,
}

fn one() -> u64 {
    1
}

fn data_err(video_id: &str, segment_id: Option<&str>, field: &str, message: String) -> Error {
    Error::Data {
        video_id: video_id.to_owned(),
        segment_id: segment_id.map(str::to_owned),
        field: field.to_owned(),
        message,
    }
}

fn by_node<T>(
    schema: &Schema,
    map: BTreeMap<String, T>,
    video_id: &str,
    segment_id: Option<&str>,
    field: &str,
) -> Result<Vec<T>> {
    let mut slots: Vec<Option<T>> = (0..schema.num_nodes()).map(|_| None).collect();
    for (name, value) in map {
        let n = schema.node_by_name(&name).ok_or_else(|| {
            data_err(video_id, segment_id, field, format!("unknown node {name:?}"))
        })?;
        slots[n] = Some(value);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(n, v)| {
            v.ok_or_else(|| {
                data_err(
                    video_id,
                    segment_id,
                    field,
                    format!("missing node {:?}", schema.node_name(n)),
                )
            })
        })
        .collect()
}

fn node_map<T: Clone>(schema: &Schema, values: &[T]) -> BTreeMap<String, T> {
    values
        .iter()
        .enumerate()
        .map(|(n, v)| (schema.node_name(n).to_owned(), v.clone()))
        .collect()
}

/// Parses a dataset from its text form. `origin` names the source in errors.
pub fn parse_dataset_str(text: &str, schema: Schema, origin: &Path) -> Result<Dataset> {
    let mut split = Split::Train;
    let mut videos: Vec<VideoRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut segments: Vec<(usize, SegmentLine)> = Vec::new();
    let mut frames: Vec<(usize, FramesLine)> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match record {
            Record::Dataset(d) => split = d.split,
            Record::Video(v) => {
                if index.insert(v.video_id.clone(), videos.len()).is_some() {
                    return Err(data_err(&v.video_id, None, "video_id", "duplicate video id".into()));
                }
                let dish = match v.dish {
                    Some(d) => Some(schema.topic_index(&d).ok_or_else(|| {
                        data_err(&v.video_id, None, "dish", format!("unknown topic {d:?}"))
                    })?),
                    None => None,
                };
                videos.push(VideoRecord {
                    video_id: v.video_id,
                    dish,
                    topic_scores: v.topic_scores,
                    segments: Vec::new(),
                    sentences: v.sentences,
                    frames: None,
                });
            }
            Record::Segment(s) => segments.push((i + 1, s)),
            Record::Frames(f) => frames.push((i + 1, f)),
        }
    }

    let lookup = |video_id: &str, line: usize| {
        index.get(video_id).copied().ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: format!("record refers to unknown video {video_id:?}"),
        })
    };

    for (line, s) in segments {
        let v = lookup(&s.video_id, line)?;
        let sid = Some(s.segment_id.as_str());
        let node_state_scores = s
            .node_state_scores
            .map(|m| by_node(&schema, m, &s.video_id, sid, "node_state_scores"))
            .transpose()?;
        let gold = match s.sr {
            Some(map) => {
                let labels = by_node(&schema, map, &s.video_id, sid, "sr")?;
                let mut states = Vec::with_capacity(labels.len());
                for (n, label) in labels.into_iter().enumerate() {
                    let st = schema.state_index(n, &label).ok_or_else(|| Error::UnknownLabel {
                        video_id: s.video_id.clone(),
                        segment_id: s.segment_id.clone(),
                        node: schema.node_name(n).to_owned(),
                        label,
                    })?;
                    states.push(st);
                }
                Some(SemanticRepresentation {
                    states,
                    topic: videos[v].dish,
                })
            }
            None => None,
        };
        videos[v].segments.push(SegmentObservation {
            segment_id: s.segment_id,
            frames: s.frames,
            attribute_scores: s.attribute_scores,
            node_state_scores,
            gold,
            sentences: s.sentences,
        });
    }

    for (line, f) in frames {
        let v = lookup(&f.video_id, line)?;
        if videos[v].frames.is_some() {
            return Err(data_err(&f.video_id, None, "frames", "duplicate frame stream".into()));
        }
        let node_state_scores = f
            .node_state_scores
            .map(|m| by_node(&schema, m, &f.video_id, None, "frames.node_state_scores"))
            .transpose()?;
        videos[v].frames = Some(FrameStream {
            chunk_len: f.chunk_len,
            attribute_scores: f.attribute_scores,
            node_state_scores,
        });
    }

    for v in &mut videos {
        v.segments.sort_by_key(|s| s.frames.start);
    }

    let dataset = Dataset {
        schema,
        videos,
        split,
    };
    if let Some(v) = validate_dataset(&dataset).into_iter().next() {
        return Err(v.into_error());
    }
    Ok(dataset)
}

/// Reads and validates a dataset file against a schema file.
pub fn parse_dataset(path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = Schema::load(schema_path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_str(&text, schema, path)
}

/// Renders a dataset in the line format accepted by [`parse_dataset`].
pub fn serialize_dataset(d: &Dataset) -> String {
    let schema = &d.schema;
    let mut lines = vec![Record::Dataset(DatasetLine { split: d.split })];
    for v in &d.videos {
        lines.push(Record::Video(VideoLine {
            video_id: v.video_id.clone(),
            dish: v.dish.map(|t| schema.topics()[t].clone()),
            topic_scores: v.topic_scores.clone(),
            sentences: v.sentences.clone(),
        }));
        for s in &v.segments {
            lines.push(Record::Segment(SegmentLine {
                video_id: v.video_id.clone(),
                segment_id: s.segment_id.clone(),
                frames: s.frames,
                attribute_scores: s.attribute_scores.clone(),
                node_state_scores: s.node_state_scores.as_ref().map(|ns| node_map(schema, ns)),
                sr: s.gold.as_ref().map(|sr| {
                    let labels: Vec<String> =
                        sr.labels(schema).into_iter().map(str::to_owned).collect();
                    node_map(schema, &labels)
                }),
                sentences: s.sentences.clone(),
            }));
        }
        if let Some(f) = &v.frames {
            lines.push(Record::Frames(FramesLine {
                video_id: v.video_id.clone(),
                chunk_len: f.chunk_len,
                attribute_scores: f.attribute_scores.clone(),
                node_state_scores: f.node_state_scores.as_ref().map(|ns| node_map(schema, ns)),
            }));
        }
    }
    let mut out = String::new();
    for record in lines {
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_dataset(d)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{NodeSpec, EMPTY};

    fn schema() -> Schema {
        let node = |name: &str, states: &[&str]| NodeSpec {
            name: name.into(),
            states: std::iter::once(EMPTY)
                .chain(states.iter().copied())
                .map(String::from)
                .collect(),
        };
        Schema::new(
            vec![
                node("activity", &["cut", "wash"]),
                node("tool", &["knife"]),
                node("object", &["cucumber", "orange"]),
                node("source", &["fridge"]),
                node("target", &["cutting-board"]),
            ],
            vec!["salad".into(), "juice".into()],
            Some(2),
        )
        .unwrap()
    }

    const MINIMAL: &str = r#"{"kind":"video","video_id":"v1","topic_scores":[0.1,0.2]}
{"kind":"segment","video_id":"v1","segment_id":"s1","frames":[0,60],"attribute_scores":[0.5,0.1],"sr":{"activity":"EMPTY","tool":"EMPTY","object":"EMPTY","source":"EMPTY","target":"EMPTY"}}
"#;

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset_str(text, schema(), Path::new("test.jsonl"))
    }

    #[test]
    fn parses_minimal_file() {
        let d = parse(MINIMAL).unwrap();
        assert_eq!(d.videos.len(), 1);
        let seg = &d.videos[0].segments[0];
        assert_eq!(seg.gold.as_ref().unwrap(), &SemanticRepresentation::empty(&d.schema));
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn unknown_label_names_segment() {
        let text = MINIMAL.replace(r#""object":"EMPTY""#, r#""object":"carrot""#);
        match parse(&text) {
            Err(Error::UnknownLabel {
                segment_id, label, ..
            }) => {
                assert_eq!(segment_id, "s1");
                assert_eq!(label, "carrot");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlap_and_topic_dim_violations() {
        let mut d = parse(MINIMAL).unwrap();
        let mut second = d.videos[0].segments[0].clone();
        second.segment_id = "s2".into();
        second.frames = FrameSpan::new(30, 90);
        d.videos[0].segments.push(second);
        let codes: Vec<_> = validate_dataset(&d).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::Overlap]);

        d.videos[0].segments.pop();
        d.videos[0].topic_scores.push(0.0);
        let codes: Vec<_> = validate_dataset(&d).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::TopicDim]);
    }

    #[test]
    fn segments_sorted_after_parse() {
        let text = r#"{"kind":"segment","video_id":"v1","segment_id":"b","frames":[60,120],"attribute_scores":[0,1]}
{"kind":"video","video_id":"v1","topic_scores":[0,0]}
{"kind":"segment","video_id":"v1","segment_id":"a","frames":[0,60],"attribute_scores":[1,0]}
"#;
        let d = parse(text).unwrap();
        let ids: Vec<_> = d.videos[0].segments.iter().map(|s| s.segment_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn missing_score_family_is_rejected() {
        let text = r#"{"kind":"video","video_id":"v1","topic_scores":[0,0]}
{"kind":"segment","video_id":"v1","segment_id":"a","frames":[0,60]}
"#;
        assert!(matches!(parse(text), Err(Error::Data { .. })));
    }

    #[test]
    fn split_preserves_order() {
        let mut v = VideoRecord::new("v", vec![0.0, 0.0]);
        for (i, labeled) in [true, false, true, true, false].into_iter().enumerate() {
            let mut s = SegmentObservation::new(format!("s{i}"), FrameSpan::new(i as u64 * 10, i as u64 * 10 + 10));
            if labeled {
                s.gold = Some(SemanticRepresentation::new(vec![0; 5]));
            }
            v.segments.push(s);
        }
        let (l, u) = split_labeled_unlabeled(&v);
        assert_eq!((l.len(), u.len()), (3, 2));
        assert_eq!(l.iter().map(|s| s.segment_id.as_str()).collect::<Vec<_>>(), ["s0", "s2", "s3"]);

        v.segments.iter_mut().for_each(|s| s.gold = None);
        let (l, u) = split_labeled_unlabeled(&v);
        assert_eq!((l.len(), u.len()), (0, 5));
    }
}
