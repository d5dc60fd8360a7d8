//! Turns per-segment sentences into a paragraph: punctuation, merging of
//! adjacent sentences that share a verb or an object, referring expressions
//! for the subject, and temporal adverbials.
//!
//! Verb and object identity come from the SR each sentence was generated
//! from, so no syntactic parse is needed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bleu::tokenize;
use crate::error::{Error, Result};
use crate::translation::source::split_label;

pub const DEFAULT_SUBJECT: &str = "the person";
const DETERMINERS: &[&str] = &["a", "an", "the", "some"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Neutral,
}

impl std::str::FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            "neutral" => Ok(Gender::Neutral),
            _ => Err(Error::InvalidArgument(format!("unknown gender {s:?}"))),
        }
    }
}

impl Gender {
    /// (first mention, later full mention, pronoun)
    fn forms(self) -> (&'static str, &'static str, &'static str) {
        match self {
            Gender::Female => ("a woman", "the woman", "she"),
            Gender::Male => ("a man", "the man", "he"),
            Gender::Neutral => (DEFAULT_SUBJECT, DEFAULT_SUBJECT, DEFAULT_SUBJECT),
        }
    }
}

/// Loads a JSON map from video id to gender.
pub fn load_genders(path: &Path) -> Result<BTreeMap<String, Gender>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceUnit {
    pub text: String,
    /// Activity label of the originating SR.
    pub verb: String,
    /// Object label of the originating SR.
    pub object: String,
    pub subject: String,
}

impl SentenceUnit {
    pub fn new(text: impl Into<String>, verb: impl Into<String>, object: impl Into<String>) -> Self {
        SentenceUnit {
            text: text.into(),
            verb: verb.into(),
            object: object.into(),
            subject: DEFAULT_SUBJECT.to_owned(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohesionConfig {
    pub gender: Gender,
    pub merge_objects: bool,
    pub merge_verbs: bool,
    pub referring_expressions: bool,
    pub adverbials: bool,
}

impl Default for CohesionConfig {
    fn default() -> Self {
        CohesionConfig {
            gender: Gender::Neutral,
            merge_objects: true,
            merge_verbs: true,
            referring_expressions: true,
            adverbials: true,
        }
    }
}

/// Past-tense forms of verb lemmas; anything missing is inflected by the
/// regular spelling rules.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    past: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        let past = serde_json::from_str(include_str!("../data/past_tense.json")).expect("bundled lexicon parses");
        Lexicon { past }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let past = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Lexicon { past })
    }

    pub fn past_word(&self, lemma: &str) -> String {
        if let Some(p) = self.past.get(lemma) {
            return p.clone();
        }
        let bytes = lemma.as_bytes();
        let vowel = |c: u8| b"aeiou".contains(&c);
        match bytes {
            [.., b'e'] => format!("{lemma}d"),
            [.., c, b'y'] if !vowel(*c) => format!("{}ied", &lemma[..lemma.len() - 1]),
            _ => format!("{lemma}ed"),
        }
    }

    /// Past form of an activity label: the first word is inflected, any
    /// particles follow (`take-out` → `took out`).
    pub fn past_phrase(&self, label: &str) -> Vec<String> {
        let mut words = split_label(label);
        if let Some(first) = words.first_mut() {
            *first = self.past_word(first);
        }
        words
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::bundled()
    }
}

fn find(hay: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Span of the object phrase: the label words plus a preceding determiner.
fn object_span(tokens: &[String], object: &str) -> Option<(usize, usize)> {
    let words = split_label(object);
    let at = find(tokens, &words)?;
    let start = if at > 0 && DETERMINERS.contains(&tokens[at - 1].as_str()) { at - 1 } else { at };
    Some((start, at + words.len()))
}

/// Tokens without trailing punctuation.
fn body(text: &str) -> Vec<String> {
    let mut t = tokenize(text);
    while t.last().is_some_and(|w| w.chars().all(|c| c.is_ascii_punctuation())) {
        t.pop();
    }
    t
}

struct Working {
    tokens: Vec<String>,
    subject: Vec<String>,
}

/// Same verb, different objects: "and <object phrase 2>" goes right after
/// the first object phrase, keeping the first sentence's tail.
fn merge_objects(a: &SentenceUnit, ta: &[String], b: &SentenceUnit, tb: &[String]) -> Option<Vec<String>> {
    if a.verb != b.verb || a.object == b.object {
        return None;
    }
    let (_, ea) = object_span(ta, &a.object)?;
    let (sb, eb) = object_span(tb, &b.object)?;
    let mut out = ta[..ea].to_vec();
    out.push("and".into());
    out.extend_from_slice(&tb[sb..eb]);
    out.extend_from_slice(&ta[ea..]);
    Some(out)
}

/// Same object, different verbs, and identical wording after the verbs:
/// "and <verb 2>" goes right after the first verb.
fn merge_verbs(
    a: &SentenceUnit,
    ta: &[String],
    b: &SentenceUnit,
    tb: &[String],
    lex: &Lexicon,
) -> Option<Vec<String>> {
    if a.object != b.object || a.verb == b.verb {
        return None;
    }
    let va = lex.past_phrase(&a.verb);
    let vb = lex.past_phrase(&b.verb);
    let ia = find(ta, &va)? + va.len();
    let ib = find(tb, &vb)? + vb.len();
    if ta[ia..] != tb[ib..] {
        return None;
    }
    let mut out = ta[..ia].to_vec();
    out.push("and".into());
    out.extend(vb);
    out.extend_from_slice(&ta[ia..]);
    Some(out)
}

fn adverbial(k: usize, m: usize) -> Option<&'static str> {
    if k == 0 {
        None
    } else if k == 1 {
        Some("next,")
    } else if k + 1 == m && m >= 3 {
        Some("finally,")
    } else if k % 2 == 1 {
        Some("then,")
    } else {
        None
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Replaces every occurrence of `subject` in `tokens`, the first with
/// `first` and the rest with `rest`.
fn replace_subject(tokens: &[String], subject: &[String], first: &str, rest: &str) -> (Vec<String>, bool) {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    let mut seen = false;
    while i < tokens.len() {
        if !subject.is_empty() && tokens[i..].starts_with(subject) {
            let form = if seen { rest } else { first };
            out.extend(form.split_whitespace().map(String::from));
            seen = true;
            i += subject.len();
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    (out, seen)
}

/// The output sentences, each capitalized and ending in one period.
pub fn cohesive_sentences(units: &[SentenceUnit], cfg: &CohesionConfig, lex: &Lexicon) -> Vec<String> {
    let tokens: Vec<Vec<String>> = units.iter().map(|u| body(&u.text)).collect();
    // Each unit merges at most once, with its right neighbour.
    let mut merged: Vec<Working> = Vec::new();
    let mut i = 0;
    while i < units.len() {
        let subject = body(&units[i].subject);
        if i + 1 < units.len() {
            let (a, b) = (&units[i], &units[i + 1]);
            let joined = cfg
                .merge_objects
                .then(|| merge_objects(a, &tokens[i], b, &tokens[i + 1]))
                .flatten()
                .or_else(|| {
                    cfg.merge_verbs
                        .then(|| merge_verbs(a, &tokens[i], b, &tokens[i + 1], lex))
                        .flatten()
                });
            if let Some(t) = joined {
                merged.push(Working { tokens: t, subject });
                i += 2;
                continue;
            }
        }
        merged.push(Working {
            tokens: tokens[i].clone(),
            subject,
        });
        i += 1;
    }

    let (first, full, pronoun) = cfg.gender.forms();
    let mut mentions = 0;
    let m = merged.len();
    merged
        .into_iter()
        .enumerate()
        .map(|(k, w)| {
            let mut t = w.tokens;
            if cfg.gender != Gender::Neutral {
                // Without referring expressions the subject is only gendered.
                let lead = match mentions {
                    0 => first,
                    n if n % 2 == 1 && cfg.referring_expressions => pronoun,
                    _ => full,
                };
                let (replaced, seen) = replace_subject(&t, &w.subject, lead, full);
                if seen {
                    mentions += 1;
                }
                t = replaced;
            }
            if cfg.adverbials {
                if let Some(adv) = adverbial(k, m) {
                    t.insert(0, adv.to_owned());
                }
            }
            let mut s = t.join(" ");
            s = s.replace(" ,", ",");
            format!("{}.", capitalize(&s))
        })
        .collect()
}

pub fn apply_cohesion(units: &[SentenceUnit], cfg: &CohesionConfig, lex: &Lexicon) -> Result<String> {
    if units.is_empty() {
        return Err(Error::module("cohesion", "no sentences to post-process"));
    }
    Ok(cohesive_sentences(units, cfg, lex).join(" "))
}
