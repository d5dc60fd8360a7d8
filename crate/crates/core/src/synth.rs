//! Seeded synthetic kitchen corpus: three dishes, scripted steps with noisy
//! classifier scores, background snippets, frame streams and reference
//! sentences at three levels of detail.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cohesion::Gender;
use crate::data::{Dataset, FrameSpan, FrameStream, SemanticRepresentation, Split, VideoRecord};
use crate::relevance::{build_tfidf, score_segment, select_top_segments, TfidfTable};
use crate::schema::{NodeSpec, Schema, EMPTY};

pub const ACTIVITIES: &[&str] = &["take-out", "wash", "peel", "cut", "crack", "mix", "stir", "put-in"];
pub const TOOLS: &[&str] = &["knife", "peeler", "spoon", "spatula", "ladle"];
pub const OBJECTS: &[&str] = &[
    "cucumber", "tomato", "lettuce", "egg", "cheese", "ham", "chives", "carrot", "potato", "leek", "onion",
];
pub const SOURCES: &[&str] = &["fridge", "cupboard", "drawer"];
pub const TARGETS: &[&str] = &["cutting-board", "bowl", "pan", "pot"];
pub const DISHES: &[&str] = &["salad", "eggs", "soup"];

/// Dish-specific ingredients; one of them is the video's main ingredient.
const INGREDIENTS: [[&str; 3]; 3] = [
    ["cucumber", "tomato", "lettuce"],
    ["cheese", "ham", "chives"],
    ["carrot", "potato", "leek"],
];

/// Segments per video described at the short level.
const SHORT_SEGMENTS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub videos_per_dish: usize,
    /// Videos per dish in the dev and test splits; the rest train.
    pub dev_per_dish: usize,
    pub test_per_dish: usize,
    pub chunk_len: u64,
    /// Chance that a segment's object score favours a wrong ingredient.
    pub object_confusion: f64,
    /// Same for the other nodes.
    pub other_confusion: f64,
    /// Per-row score noise.
    pub row_noise: f64,
    pub topic_noise: f64,
    /// Chance of a background snippet after each step.
    pub background_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            videos_per_dish: 10,
            dev_per_dish: 2,
            test_per_dish: 2,
            chunk_len: 20,
            object_confusion: 0.3,
            other_confusion: 0.08,
            row_noise: 0.15,
            topic_noise: 0.35,
            background_rate: 0.35,
        }
    }
}

pub struct SynthCorpus {
    pub schema: Schema,
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub genders: BTreeMap<String, Gender>,
}

pub fn schema() -> Schema {
    let node = |name: &str, states: &[&str]| NodeSpec {
        name: name.into(),
        states: std::iter::once(EMPTY).chain(states.iter().copied()).map(String::from).collect(),
    };
    Schema::new(
        vec![
            node("activity", ACTIVITIES),
            node("tool", TOOLS),
            node("object", OBJECTS),
            node("source", SOURCES),
            node("target", TARGETS),
        ],
        DISHES.iter().map(|d| d.to_string()).collect(),
        Some(attribute_dim()),
    )
    .expect("synthetic schema is valid")
}

/// One-hot activity, one-hot object, one background flag.
fn attribute_dim() -> usize {
    ACTIVITIES.len() + 1 + OBJECTS.len() + 1 + 1
}

#[derive(Clone, Copy, Debug)]
struct Step {
    activity: &'static str,
    tool: &'static str,
    object: &'static str,
    source: &'static str,
    target: &'static str,
}

fn step(activity: &'static str, tool: &'static str, object: &'static str, source: &'static str, target: &'static str) -> Step {
    Step {
        activity,
        tool,
        object,
        source,
        target,
    }
}

/// The dish-defining last step uses a tool and target specific to the dish,
/// so relevance ranks it first.
fn script(dish: usize, main: &'static str, rng: &mut ChaCha8Rng) -> Vec<Step> {
    let others: Vec<&'static str> = INGREDIENTS[dish].iter().copied().filter(|&i| i != main).collect();
    let other = *others.choose(rng).expect("two other ingredients");
    let mut steps = match dish {
        0 => vec![
            step("take-out", EMPTY, main, "fridge", EMPTY),
            step("wash", EMPTY, main, EMPTY, EMPTY),
            step("cut", "knife", main, EMPTY, "cutting-board"),
            step("take-out", EMPTY, other, "fridge", EMPTY),
            step("cut", "knife", other, EMPTY, "cutting-board"),
            step("mix", "spoon", main, EMPTY, "bowl"),
        ],
        1 => vec![
            step("take-out", EMPTY, "egg", "fridge", EMPTY),
            step("crack", EMPTY, "egg", EMPTY, "bowl"),
            step("take-out", EMPTY, main, "fridge", EMPTY),
            step("cut", "knife", main, EMPTY, "cutting-board"),
            step("stir", "spatula", main, EMPTY, "pan"),
        ],
        _ => vec![
            step("take-out", EMPTY, main, "cupboard", EMPTY),
            step("wash", EMPTY, main, EMPTY, EMPTY),
            step("peel", "peeler", main, EMPTY, EMPTY),
            step("cut", "knife", main, EMPTY, "cutting-board"),
            step("put-in", "ladle", main, EMPTY, "pot"),
        ],
    };
    if rng.gen_bool(0.5) {
        let at = rng.gen_range(1..steps.len());
        steps.insert(at, step("cut", "knife", "onion", EMPTY, "cutting-board"));
        steps.insert(at, step("take-out", EMPTY, "onion", "drawer", EMPTY));
    }
    steps
}

fn words(label: &str) -> String {
    label.replace(['-', '_'], " ")
}

fn with_article(x: &str) -> String {
    let article = if x.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    format!("{article} {x}")
}

/// Detailed sentence; two activities have a second phrasing.
fn detailed_sentence(s: &Step, rng: &mut ChaCha8Rng) -> String {
    let (x, src, tgt) = (words(s.object), words(s.source), words(s.target));
    let alt = rng.gen_bool(0.3);
    match s.activity {
        "take-out" if alt => format!("the person took the {x} out of the {src}"),
        "take-out" => format!("the person took out {} from the {src}", with_article(&x)),
        "wash" => format!("the person washed the {x}"),
        "peel" => format!("the person peeled the {x} with a peeler"),
        "cut" if alt => format!("the person sliced the {x} on the {tgt}"),
        "cut" => format!("the person cut the {x} on the {tgt}"),
        "crack" => format!("the person cracked the {x} into a {tgt}"),
        "mix" => format!("the person mixed the {x} in a {tgt} with a spoon"),
        "stir" => format!("the person stirred the {x} in the {tgt} with a spatula"),
        "put-in" => format!("the person put the {x} in the {tgt} with a ladle"),
        other => unreachable!("no template for {other}"),
    }
}

fn short_sentence(s: &Step) -> String {
    let x = words(s.object);
    match s.activity {
        "take-out" => format!("the person got the {x}"),
        "wash" => format!("the person rinsed the {x}"),
        "peel" => format!("the person peeled the {x}"),
        "cut" => format!("the person chopped the {x}"),
        "crack" => format!("the person broke the {x}"),
        "mix" => format!("the person tossed the {x}"),
        "stir" => format!("the person cooked the {x}"),
        "put-in" => format!("the person added the {x} to the soup"),
        other => unreachable!("no template for {other}"),
    }
}

fn single_sentence(dish: usize, main: &str) -> String {
    let x = words(main);
    match dish {
        0 => format!("the person prepared {} salad", with_article(&x)),
        1 => format!("the person scrambled eggs with {x}"),
        _ => format!("the person cooked {} soup", with_article(&x)),
    }
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    schema: &'a Schema,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl Generator<'_> {
    fn gauss(&mut self) -> f64 {
        self.noise.sample(&mut self.rng)
    }

    /// Segment-level score means per node: the gold state (or, when
    /// confused, a wrong one) stands out from the rest.
    fn score_means(&mut self, states: Option<&[usize]>) -> Vec<Vec<f64>> {
        (0..self.schema.num_nodes())
            .map(|n| {
                let k = self.schema.num_states(n);
                let mut m = vec![0.1; k];
                match states {
                    None => m[self.schema.empty_state(n)] = 0.4,
                    Some(states) => {
                        let gold = states[n];
                        let p = if n == 2 { self.cfg.object_confusion } else { self.cfg.other_confusion };
                        if self.rng.gen_bool(p) {
                            let mut wrong = self.rng.gen_range(0..k - 1);
                            if wrong >= gold {
                                wrong += 1;
                            }
                            m[wrong] = 0.8;
                            m[gold] = 0.55;
                        } else {
                            m[gold] = 0.8;
                        }
                    }
                }
                m
            })
            .collect()
    }

    fn attribute_prototype(&self, sr: Option<&SemanticRepresentation>) -> Vec<f64> {
        let mut v = vec![0.0; attribute_dim()];
        match sr {
            Some(sr) => {
                v[sr.states[0]] = 1.0;
                v[ACTIVITIES.len() + 1 + sr.states[2]] = 1.0;
            }
            None => v[attribute_dim() - 1] = 1.0,
        }
        v
    }

    fn video(&mut self, dish: usize, index: usize) -> Scripted {
        let schema = self.schema;
        let main = *INGREDIENTS[dish].choose(&mut self.rng).expect("three ingredients");
        let steps = script(dish, main, &mut self.rng);
        let video_id = format!("{}-{:02}", DISHES[dish], index);
        let mut topic_scores: Vec<f64> = (0..DISHES.len()).map(|_| 0.3).collect();
        topic_scores[dish] = 1.0;
        for t in topic_scores.iter_mut() {
            *t += self.cfg.topic_noise * self.gauss();
        }
        let mut video = VideoRecord::new(video_id.clone(), topic_scores);
        video.dish = Some(dish);

        let chunk = self.cfg.chunk_len;
        let mut attr_rows: Vec<Vec<f64>> = Vec::new();
        let mut node_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); schema.num_nodes()];
        let mut spans: Vec<(FrameSpan, Option<Step>)> = Vec::new();
        let mut frame = 0;
        for (i, s) in steps.iter().enumerate() {
            let mut pieces = vec![(self.rng.gen_range(6..=15), Some(*s))];
            if i + 1 < steps.len() && self.rng.gen_bool(self.cfg.background_rate) {
                pieces.push((self.rng.gen_range(3..=6), None));
            }
            for (rows, st) in pieces {
                let sr = st.map(|st| {
                    SemanticRepresentation::from_labels(schema, &[st.activity, st.tool, st.object, st.source, st.target])
                        .expect("script labels are in the schema")
                        .with_topic(dish)
                });
                let means = self.score_means(sr.as_ref().map(|s| s.states.as_slice()));
                let proto = self.attribute_prototype(sr.as_ref());
                for _ in 0..rows {
                    let a: Vec<f64> = proto.iter().map(|p| p + 0.05 * self.gauss()).collect();
                    attr_rows.push(a);
                    for (n, m) in means.iter().enumerate() {
                        let r: Vec<f64> = m.iter().map(|v| v + self.cfg.row_noise * self.gauss()).collect();
                        node_rows[n].push(r);
                    }
                }
                let span = FrameSpan::new(frame, frame + rows * chunk);
                frame = span.end;
                spans.push((span, st));
            }
        }
        let stream = FrameStream {
            chunk_len: chunk,
            attribute_scores: attr_rows,
            node_state_scores: Some(node_rows),
        };

        let (mut n_step, mut n_bg) = (0, 0);
        let mut steps_of = Vec::new();
        for (span, st) in spans {
            let id = match st {
                Some(_) => {
                    n_step += 1;
                    format!("{video_id}-s{n_step:02}")
                }
                None => {
                    n_bg += 1;
                    format!("{video_id}-b{n_bg:02}")
                }
            };
            let mut seg = stream.observation(id, span);
            if let Some(st) = st {
                let sr = SemanticRepresentation::from_labels(schema, &[st.activity, st.tool, st.object, st.source, st.target])
                    .expect("script labels are in the schema")
                    .with_topic(dish);
                seg.gold = Some(sr);
                let d = detailed_sentence(&st, &mut self.rng);
                seg.sentences.detailed.push(d.clone());
                video.sentences.detailed.push(d);
                steps_of.push(st);
            }
            video.segments.push(seg);
        }
        video.frames = Some(stream);
        let gender = if self.rng.gen_bool(0.5) { Gender::Female } else { Gender::Male };
        Scripted {
            video,
            gender,
            main,
            steps: steps_of,
        }
    }
}

struct Scripted {
    video: VideoRecord,
    gender: Gender,
    main: &'static str,
    /// Script step of each labeled segment, in order.
    steps: Vec<Step>,
}

/// Short sentences go to the most relevant segments under the training
/// split's tf-idf table and the single sentence to the top one.
fn attach_summaries(s: &mut Scripted, tfidf: &TfidfTable) {
    let v = &mut s.video;
    let dish = v.dish.expect("synthetic videos have a dish");
    let labeled: Vec<usize> = (0..v.segments.len()).filter(|&i| v.segments[i].is_labeled()).collect();
    let scores: Vec<f64> = labeled
        .iter()
        .map(|&i| score_segment(v.segments[i].gold.as_ref().expect("labeled"), dish, tfidf).expect("same schema"))
        .collect();
    let top = select_top_segments(&scores, 1)[0];
    for k in select_top_segments(&scores, SHORT_SEGMENTS) {
        let text = short_sentence(&s.steps[k]);
        v.segments[labeled[k]].sentences.short.push(text.clone());
        v.sentences.short.push(text);
    }
    let text = single_sentence(dish, s.main);
    v.segments[labeled[top]].sentences.single.push(text.clone());
    v.sentences.single.push(text);
}

/// Generates the corpus. Videos are interleaved by dish and split per dish.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let schema = schema();
    let mut gen = Generator {
        cfg,
        schema: &schema,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        noise: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let n_train = cfg.videos_per_dish.saturating_sub(cfg.dev_per_dish + cfg.test_per_dish);
    let mut scripted: Vec<(Split, Scripted)> = Vec::new();
    for index in 0..cfg.videos_per_dish {
        for dish in 0..DISHES.len() {
            let split = if index < n_train {
                Split::Train
            } else if index < n_train + cfg.dev_per_dish {
                Split::Dev
            } else {
                Split::Test
            };
            scripted.push((split, gen.video(dish, index)));
        }
    }
    let mut train = Dataset::new(schema.clone(), Split::Train);
    train.videos = scripted
        .iter()
        .filter(|(split, _)| *split == Split::Train)
        .map(|(_, s)| s.video.clone())
        .collect();
    let tfidf = build_tfidf(&train).expect("training split has labeled segments");

    let mut dev = Dataset::new(schema.clone(), Split::Dev);
    let mut test = Dataset::new(schema.clone(), Split::Test);
    train.videos.clear();
    let mut genders = BTreeMap::new();
    for (split, mut s) in scripted {
        attach_summaries(&mut s, &tfidf);
        genders.insert(s.video.video_id.clone(), s.gender);
        match split {
            Split::Train => train.videos.push(s.video),
            Split::Dev => dev.videos.push(s.video),
            Split::Test => test.videos.push(s.video),
        }
    }
    SynthCorpus {
        schema,
        train,
        dev,
        test,
        genders,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{serialize_dataset, validate_dataset};

    #[test]
    fn splits_and_validity() {
        let c = generate(&SynthConfig::default());
        assert_eq!(c.train.videos.len(), 18);
        assert_eq!(c.dev.videos.len(), 6);
        assert_eq!(c.test.videos.len(), 6);
        for d in [&c.train, &c.dev, &c.test] {
            assert!(validate_dataset(d).is_empty(), "{:?}", validate_dataset(d));
            for v in &d.videos {
                assert_eq!(v.sentences.single.len(), 1);
                assert!(v.sentences.short.len() >= 3);
                assert!(v.segments.iter().any(|s| !s.is_labeled()) || v.segments.len() >= 5);
            }
        }
        assert_eq!(c.genders.len(), 30);
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(serialize_dataset(&a.train), serialize_dataset(&b.train));
        let c = generate(&SynthConfig { seed: 8, ..SynthConfig::default() });
        assert_ne!(serialize_dataset(&a.train), serialize_dataset(&c.train));
    }

    #[test]
    fn joint_space_is_small() {
        let s = schema();
        let size: usize = s.cardinalities().iter().product();
        assert!(size < 100_000, "{size}");
    }
}
