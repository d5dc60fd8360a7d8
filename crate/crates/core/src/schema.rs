//! State spaces of the semantic representation and the topic node.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of the "nothing here" state every SR node must carry.
pub const EMPTY: &str = "EMPTY";

/// Default node order of the semantic representation.
pub const DEFAULT_NODES: [&str; 5] = ["activity", "tool", "object", "source", "target"];

/// A CRF variable: one of the SR nodes, or the video-level topic node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Sr(usize),
    Topic,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sr(n) => write!(f, "node {n}"),
            NodeId::Topic => f.write_str("topic"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub states: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    nodes: Vec<NodeSpec>,
    topics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attribute_dim: Option<usize>,
}

/// Ordered state labels for every SR node plus the topic list.
#[derive(Clone, Debug)]
pub struct Schema {
    nodes: Vec<NodeSpec>,
    topics: Vec<String>,
    attribute_dim: Option<usize>,
    state_index: Vec<HashMap<String, usize>>,
    topic_index: HashMap<String, usize>,
    empty: Vec<usize>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.topics == other.topics
            && self.attribute_dim == other.attribute_dim
    }
}

impl Serialize for Schema {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SchemaFile {
            nodes: self.nodes.clone(),
            topics: self.topics.clone(),
            attribute_dim: self.attribute_dim,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = SchemaFile::deserialize(d)?;
        Schema::new(file.nodes, file.topics, file.attribute_dim).map_err(serde::de::Error::custom)
    }
}

impl Schema {
    pub fn new(
        nodes: Vec<NodeSpec>,
        topics: Vec<String>,
        attribute_dim: Option<usize>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Schema("no SR nodes".into()));
        }
        if topics.is_empty() {
            return Err(Error::Schema("no topics".into()));
        }
        let mut names = HashMap::new();
        let mut state_index = Vec::with_capacity(nodes.len());
        let mut empty = Vec::with_capacity(nodes.len());
        for node in &nodes {
            if names.insert(node.name.clone(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate node name {:?}", node.name)));
            }
            let index = unique_index(&node.states)
                .map_err(|l| Error::Schema(format!("node {}: duplicate state {l:?}", node.name)))?;
            let e = *index
                .get(EMPTY)
                .ok_or_else(|| Error::Schema(format!("node {} lacks the {EMPTY} state", node.name)))?;
            empty.push(e);
            state_index.push(index);
        }
        let topic_index =
            unique_index(&topics).map_err(|l| Error::Schema(format!("duplicate topic {l:?}")))?;
        if attribute_dim == Some(0) {
            return Err(Error::Schema("attribute_dim must be positive".into()));
        }
        Ok(Schema {
            nodes,
            topics,
            attribute_dim,
            state_index,
            topic_index,
            empty,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("schema serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.nodes[node].name
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn states(&self, node: usize) -> &[String] {
        &self.nodes[node].states
    }

    pub fn num_states(&self, node: usize) -> usize {
        self.nodes[node].states.len()
    }

    pub fn state_index(&self, node: usize, label: &str) -> Option<usize> {
        self.state_index[node].get(label).copied()
    }

    pub fn empty_state(&self, node: usize) -> usize {
        self.empty[node]
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn topic_index(&self, label: &str) -> Option<usize> {
        self.topic_index.get(label).copied()
    }

    pub fn attribute_dim(&self) -> Option<usize> {
        self.attribute_dim
    }

    /// Number of CRF variables: the SR nodes followed by the topic node.
    pub fn num_variables(&self) -> usize {
        self.nodes.len() + 1
    }

    /// Variable index of a node; the topic node comes last.
    pub fn variable(&self, node: NodeId) -> usize {
        match node {
            NodeId::Sr(n) => n,
            NodeId::Topic => self.nodes.len(),
        }
    }

    pub fn node_of_variable(&self, var: usize) -> NodeId {
        if var == self.nodes.len() {
            NodeId::Topic
        } else {
            NodeId::Sr(var)
        }
    }

    /// State counts per variable, SR nodes first and the topic last.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|n| n.states.len())
            .chain(std::iter::once(self.topics.len()))
            .collect()
    }

    pub fn variable_label(&self, var: usize, state: usize) -> &str {
        match self.node_of_variable(var) {
            NodeId::Sr(n) => &self.nodes[n].states[state],
            NodeId::Topic => &self.topics[state],
        }
    }
}

fn unique_index(labels: &[String]) -> std::result::Result<HashMap<String, usize>, String> {
    if labels.is_empty() {
        return Err(String::new());
    }
    let mut index = HashMap::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        if index.insert(l.clone(), i).is_some() {
            return Err(l.clone());
        }
    }
    Ok(index)
}
