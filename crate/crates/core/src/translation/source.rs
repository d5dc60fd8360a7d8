//! Source-side token strings for semantic representations.

use crate::data::SemanticRepresentation;
use crate::schema::Schema;

/// Placeholder token for an EMPTY node.
pub fn null_token(node: usize) -> String {
    format!("null{node}")
}

pub fn is_null_token(token: &str) -> bool {
    token
        .strip_prefix("null")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Composite labels become separate words: `cutting-board` → `cutting board`.
pub fn split_label(label: &str) -> Vec<String> {
    label
        .split(['-', '_'])
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Tokens of one node state: the split label, or the node's null token.
pub fn state_tokens(schema: &Schema, node: usize, state: usize) -> Vec<String> {
    if state == schema.empty_state(node) {
        vec![null_token(node)]
    } else {
        split_label(&schema.states(node)[state])
    }
}

pub fn sr_to_source(sr: &SemanticRepresentation, schema: &Schema) -> Vec<String> {
    sr.states
        .iter()
        .enumerate()
        .flat_map(|(n, &s)| state_tokens(schema, n, s))
        .collect()
}

/// Inverse of [`sr_to_source`] for schemas whose split labels are
/// unambiguous; prefers the longest matching label at each node.
pub fn source_to_sr(tokens: &[String], schema: &Schema) -> Option<SemanticRepresentation> {
    let mut pos = 0;
    let mut states = Vec::with_capacity(schema.num_nodes());
    for n in 0..schema.num_nodes() {
        let mut best: Option<(usize, usize)> = None;
        for s in 0..schema.num_states(n) {
            let toks = state_tokens(schema, n, s);
            if tokens[pos..].starts_with(&toks) && best.is_none_or(|(_, len)| toks.len() > len) {
                best = Some((s, toks.len()));
            }
        }
        let (s, len) = best?;
        states.push(s);
        pos += len;
    }
    (pos == tokens.len()).then(|| SemanticRepresentation::new(states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{NodeSpec, EMPTY};

    fn schema() -> Schema {
        let node = |name: &str, states: &[&str]| NodeSpec {
            name: name.into(),
            states: std::iter::once(EMPTY).chain(states.iter().copied()).map(String::from).collect(),
        };
        Schema::new(
            vec![
                node("activity", &["cut", "take-out", "cut-off"]),
                node("tool", &["knife", "peeler"]),
                node("object", &["cucumber", "egg-shells"]),
                node("source", &["fridge"]),
                node("target", &["cutting-board", "plate"]),
            ],
            vec!["salad".into()],
            None,
        )
        .unwrap()
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn applies_split_and_null_rules() {
        let s = schema();
        let sr = SemanticRepresentation::from_labels(&s, &["cut", "knife", "cucumber", EMPTY, "cutting-board"]).unwrap();
        assert_eq!(sr_to_source(&sr, &s), words("cut knife cucumber null3 cutting board"));
        assert_eq!(
            sr_to_source(&SemanticRepresentation::empty(&s), &s),
            words("null0 null1 null2 null3 null4")
        );
    }

    #[test]
    fn round_trips_every_sr_of_fixture() {
        let s = schema();
        let card: Vec<usize> = (0..s.num_nodes()).map(|n| s.num_states(n)).collect();
        let mut idx = vec![0; card.len()];
        loop {
            let sr = SemanticRepresentation::new(idx.clone());
            assert_eq!(source_to_sr(&sr_to_source(&sr, &s), &s), Some(sr));
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < card[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }

    #[test]
    fn null_token_recognition() {
        assert!(is_null_token("null3"));
        assert!(!is_null_token("null"));
        assert!(!is_null_token("nullify"));
    }
}
