//! Small hand-built inputs: the egg-shells/cucumber lattice, the peeler and
//! knife cohesion example, and piecewise-constant score streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohesion::SentenceUnit;
use crate::data::FrameSpan;
use crate::lattice::{build_lattice, LatticeOptions, WordLattice};
use crate::schema::{NodeSpec, Schema, EMPTY};
use crate::translation::{estimate_lm, NgramLm, PhraseTable};

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn kitchen_schema() -> Schema {
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
    .expect("valid schema")
}

/// A lattice for ⟨cut off, egg-shells | cucumber⟩ plus a phrase table that
/// treats both objects alike and an LM that has only seen "cut off" with
/// the cucumber.
pub struct EggShells {
    pub schema: Schema,
    pub lattice: WordLattice,
    pub phrases: PhraseTable,
    pub lm: NgramLm,
}

/// `p_shells` is the object marginal of egg-shells; cucumber gets the rest.
pub fn egg_shells(p_shells: f64) -> EggShells {
    let schema = kitchen_schema();
    let delta = |n: usize, k: usize| -> Vec<f64> { (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    let marginals = vec![
        delta(3, 1),
        delta(2, 0),
        vec![0.0, p_shells, 1.0 - p_shells],
        delta(2, 0),
        delta(2, 0),
    ];
    let lattice = build_lattice(&marginals, &schema, &LatticeOptions::default()).expect("valid lattice");
    let phrases = PhraseTable::from_entries([
        (words("cut off"), words("the person cut off"), 0.0, 0.0),
        (words("egg shells"), words("the egg shells"), -0.1, -0.1),
        (words("cucumber"), words("the cucumber"), -0.1, -0.1),
        (words("null1"), vec![], 0.0, 0.0),
        (words("null3"), vec![], 0.0, 0.0),
        (words("null4"), vec![], 0.0, 0.0),
    ]);
    let corpus: Vec<Vec<String>> = [
        "the person cut off the cucumber",
        "the person cut off the ends of the cucumber",
        "the person washed the cucumber",
        "the person threw away the egg shells",
        "the person cracked the egg and threw away the egg shells",
    ]
    .iter()
    .map(|s| words(s))
    .collect();
    let lm = estimate_lm(&corpus, 3).expect("nonempty corpus");
    EggShells {
        schema,
        lattice,
        phrases,
        lm,
    }
}

/// Six decoded sentences about getting out, peeling and slicing a cucumber.
pub fn cucumber_units() -> Vec<SentenceUnit> {
    vec![
        SentenceUnit::new("the person got out a cucumber from the fridge", "get-out", "cucumber"),
        SentenceUnit::new("the person washed the cucumber", "wash", "cucumber"),
        SentenceUnit::new("the person got out a peeler from the drawer", "get-out", "peeler"),
        SentenceUnit::new("the person got out a knife from the drawer", "get-out", "knife"),
        SentenceUnit::new("the person peeled the cucumber", "peel", "cucumber"),
        SentenceUnit::new("the person sliced the cucumber", "slice", "cucumber"),
    ]
}

pub const STREAM_DIM: usize = 12;
const FOREGROUND_DIMS: usize = 9;

/// One score row per frame, built from constant blocks plus uniform noise.
pub struct BlockStream {
    pub rows: Vec<Vec<f64>>,
    /// Frame offsets where a new block starts, excluding 0.
    pub boundaries: Vec<u64>,
    pub background: Option<FrameSpan>,
}

/// Random nonnegative prototype supported on `dims`.
fn prototype(rng: &mut ChaCha8Rng, dims: std::ops::Range<usize>) -> Vec<f64> {
    let mut v = vec![0.0; STREAM_DIM];
    for d in dims {
        v[d] = rng.gen_range(0.5..1.0);
    }
    v
}

fn foreground(rng: &mut ChaCha8Rng, block: usize) -> Vec<f64> {
    let w = FOREGROUND_DIMS / 3;
    prototype(rng, block * w..(block + 1) * w)
}

fn background(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = prototype(rng, FOREGROUND_DIMS..STREAM_DIM);
    v.iter_mut().for_each(|x| *x *= 0.3);
    v
}

/// Three blocks on mutually orthogonal supports, each 150–420 frames long.
/// With `with_background`, a low-energy block on a fourth support is
/// inserted between two of them.
pub fn block_stream(seed: u64, noise: f64, with_background: bool) -> BlockStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<(Vec<f64>, u64, bool)> = (0..3)
        .map(|b| (foreground(&mut rng, b), rng.gen_range(150..=420), false))
        .collect();
    if with_background {
        let at = rng.gen_range(1..=2);
        blocks.insert(at, (background(&mut rng), rng.gen_range(120..=240), true));
    }
    let mut rows = Vec::new();
    let mut boundaries = Vec::new();
    let mut bg = None;
    for (proto, len, is_bg) in blocks {
        let start = rows.len() as u64;
        if start > 0 {
            boundaries.push(start);
        }
        if is_bg {
            bg = Some(FrameSpan::new(start, start + len));
        }
        for _ in 0..len {
            rows.push(proto.iter().map(|x| x + rng.gen_range(0.0..=noise)).collect());
        }
    }
    BlockStream {
        rows,
        boundaries,
        background: bg,
    }
}

/// Labelled mean vectors for training a background classifier: `n`
/// foreground (true) and `n` background (false) examples.
pub fn background_examples(seed: u64, n: usize, noise: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let fg = i % 2 == 0;
        let proto = if fg {
            let b = rng.gen_range(0..3);
            foreground(&mut rng, b)
        } else {
            background(&mut rng)
        };
        xs.push(proto.iter().map(|x| x + rng.gen_range(0.0..=noise) / 2.0).collect());
        labels.push(fg);
    }
    (xs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn egg_shells_has_two_paths() {
        let f = egg_shells(0.6);
        assert_eq!(f.lattice.paths().len(), 2);
    }

    #[test]
    fn block_streams_are_seeded() {
        let a = block_stream(3, 0.1, true);
        let b = block_stream(3, 0.1, true);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.boundaries.len(), 3);
        let bg = a.background.unwrap();
        assert!(a.boundaries.contains(&bg.start));
        assert_eq!(block_stream(3, 0.1, false).boundaries.len(), 2);
    }
}
