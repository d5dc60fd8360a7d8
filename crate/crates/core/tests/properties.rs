mod common;

use std::path::Path;

use latticedesc::bleu::bleu;
use latticedesc::cohesion::{cohesive_sentences, CohesionConfig, Gender, Lexicon, SentenceUnit};
use latticedesc::crf::UnaryMode;
use latticedesc::data::{parse_dataset_str, serialize_dataset, validate_dataset, SemanticRepresentation};
use latticedesc::decoder::{decode, DecoderWeights};
use latticedesc::fixtures::egg_shells;
use latticedesc::inference::{exhaustive_inference, select_topic_from_posteriors, ClampSet};
use latticedesc::lattice::{build_lattice, LatticeOptions};
use latticedesc::relevance::{select_top_segments, TfidfTable};
use latticedesc::schema::NodeId;
use latticedesc::segmentation::{filter_background, segment_rows, BackgroundClassifier, SegmenterConfig};
use latticedesc::synth::{self, generate, SynthConfig};
use proptest::prelude::*;

fn tokens(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dataset_round_trips(seed in 0u64..10_000) {
        let corpus = generate(&SynthConfig { seed, videos_per_dish: 3, dev_per_dish: 1, test_per_dish: 1, ..SynthConfig::default() });
        for d in [&corpus.train, &corpus.dev, &corpus.test] {
            let text = serialize_dataset(d);
            let back = parse_dataset_str(&text, d.schema.clone(), Path::new("mem.jsonl")).unwrap();
            prop_assert_eq!(&back, d);
            prop_assert_eq!(serialize_dataset(&back), text);
            prop_assert!(validate_dataset(&back).is_empty());
            for v in &back.videos {
                prop_assert!(v.segments.windows(2).all(|w| w[0].frames.start < w[1].frames.start));
            }
        }
    }
}

proptest! {
    #[test]
    fn pairwise_energy_is_symmetric(seed in any::<u64>()) {
        let (model, _) = common::gradient_problem(&mut common::rng(seed), UnaryMode::Attribute);
        let schema = model.schema().clone();
        let card = schema.cardinalities();
        for a in 0..card.len() {
            for b in 0..card.len() {
                if a == b {
                    continue;
                }
                let (na, nb) = (schema.node_of_variable(a), schema.node_of_variable(b));
                for sa in 0..card[a] {
                    for sb in 0..card[b] {
                        prop_assert_eq!(model.pairwise_energy(na, sa, nb, sb).unwrap(), model.pairwise_energy(nb, sb, na, sa).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn clamped_marginals_are_conditionals(seed in any::<u64>(), node in 0usize..5) {
        let mut rng = common::rng(seed);
        let (model, data) = common::gradient_problem(&mut rng, UnaryMode::Semantic);
        let schema = model.schema().clone();
        let (vid, seg) = (&data.videos[0], &data.videos[0].segments[0]);
        let state = seed as usize % schema.num_states(node);
        let mut clamps = ClampSet::new();
        clamps.clamp(NodeId::Sr(node), state);
        let got = exhaustive_inference(&model, seg, vid, &clamps).unwrap();

        // Brute force over every assignment consistent with the clamp.
        let card = schema.cardinalities();
        let mut weights: Vec<Vec<f64>> = card.iter().map(|&c| vec![0.0; c]).collect();
        let total: usize = card.iter().product();
        for mut code in 0..total {
            let mut a = Vec::with_capacity(card.len());
            for &c in &card {
                a.push(code % c);
                code /= c;
            }
            if a[node] != state {
                continue;
            }
            let topic = a[card.len() - 1];
            let sr = SemanticRepresentation::new(a[..card.len() - 1].to_vec()).with_topic(topic);
            let p = model.total_energy(&sr, seg, vid).unwrap().exp();
            for (v, &s) in a.iter().enumerate() {
                weights[v][s] += p;
            }
        }
        for (v, w) in weights.iter().enumerate() {
            let z: f64 = w.iter().sum();
            for (s, x) in w.iter().enumerate() {
                prop_assert!((got.marginals[v][s] - x / z).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn topic_choice_ignores_positive_rescaling(
        posteriors in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..6),
        scale in 1e-3f64..1e3,
    ) {
        let scaled: Vec<Vec<f64>> = posteriors.iter().map(|p| p.iter().map(|x| x * scale).collect()).collect();
        prop_assert_eq!(select_topic_from_posteriors(&posteriors), select_topic_from_posteriors(&scaled));
    }

    #[test]
    fn segmentation_partitions_the_stream(
        rows in prop::collection::vec(prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 3), 1..40),
        chunk_len in 1u64..5,
        initial_len in 1u64..12,
        stop_threshold in -0.5f64..1.0,
        weights in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let cfg = SegmenterConfig { initial_len, stop_threshold, ..SegmenterConfig::default() };
        let spans = segment_rows(&rows, chunk_len, &cfg).unwrap();
        prop_assert_eq!(spans[0].start, 0);
        prop_assert_eq!(spans.last().unwrap().end, rows.len() as u64 * chunk_len);
        prop_assert!(spans.iter().all(|s| !s.is_empty()));
        prop_assert!(spans.windows(2).all(|w| w[0].end == w[1].start));

        let clf = BackgroundClassifier { weights, bias: 0.0 };
        let mean = |s: &latticedesc::data::FrameSpan| {
            let r = &rows[(s.start / chunk_len) as usize..s.end.div_ceil(chunk_len) as usize];
            (0..3).map(|j| r.iter().map(|x| x[j]).sum::<f64>() / r.len() as f64).collect::<Vec<f64>>()
        };
        let means: Vec<Vec<f64>> = spans.iter().map(mean).collect();
        let kept = filter_background(&spans, &means, &clf, &cfg);
        let kept_spans: Vec<_> = kept.iter().map(|&i| spans[i]).collect();
        let kept_means: Vec<_> = kept.iter().map(|&i| means[i].clone()).collect();
        let again = filter_background(&kept_spans, &kept_means, &clf, &cfg);
        prop_assert_eq!(again, (0..kept.len()).collect::<Vec<_>>());
    }

    #[test]
    fn tfidf_is_positive_exactly_for_distinctive_states(seed in any::<u64>(), zeros in 0.0f64..1.0) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let schema = synth::schema();
        let counts: Vec<Vec<Vec<u64>>> = (0..schema.num_nodes())
            .map(|n| {
                (0..schema.num_states(n))
                    .map(|_| (0..schema.num_topics()).map(|_| if rng.gen_bool(zeros) { 0 } else { rng.gen_range(1..20) }).collect())
                    .collect()
            })
            .collect();
        let table = TfidfTable::from_counts(&schema, counts.clone()).unwrap();
        let topics = schema.num_topics();
        for (n, node) in counts.iter().enumerate() {
            for (s, per_topic) in node.iter().enumerate() {
                let support = per_topic.iter().filter(|&&c| c > 0).count();
                for (t, &c) in per_topic.iter().enumerate() {
                    let x = table.tfidf(n, s, t);
                    prop_assert!(x >= 0.0);
                    prop_assert_eq!(x > 0.0, c > 0 && support < topics);
                }
            }
        }
    }

    #[test]
    fn top_segments_are_sorted_and_sized(scores in prop::collection::vec(-5.0f64..5.0, 0..20), n in 1usize..25) {
        let picked = select_top_segments(&scores, n);
        prop_assert_eq!(picked.len(), n.min(scores.len()));
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
        if let Some(worst) = picked.iter().map(|&i| scores[i]).reduce(f64::min) {
            prop_assert!((0..scores.len()).filter(|i| !picked.contains(i)).all(|i| scores[i] <= worst));
        }
    }

    #[test]
    fn bleu_against_itself_is_100(words in prop::collection::vec("[a-z]{1,6}", 4..30)) {
        let r = bleu(std::slice::from_ref(&words), &[vec![words.clone()]]).unwrap();
        prop_assert!((r.score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_ignores_consistent_renaming(
        cand in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..15),
        refs in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..15), 1..3),
    ) {
        let rename = |w: &&str| format!("{w}{w}x");
        let cand_a = tokens(&cand);
        let refs_a: Vec<Vec<String>> = refs.iter().map(|r| tokens(r)).collect();
        let cand_b: Vec<String> = cand.iter().map(rename).collect();
        let refs_b: Vec<Vec<String>> = refs.iter().map(|r| r.iter().map(rename).collect()).collect();
        let a = bleu(&[cand_a], &[refs_a]).unwrap().score;
        let b = bleu(&[cand_b], &[refs_b]).unwrap().score;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cohesion_output_is_well_formed(
        steps in prop::collection::vec((0usize..4, 0usize..3), 1..8),
        gender in prop::sample::select(vec![Gender::Female, Gender::Male, Gender::Neutral]),
        flags in prop::array::uniform4(any::<bool>()),
    ) {
        const VERBS: [(&str, &str); 4] = [("cut", "cut"), ("wash", "washed"), ("peel", "peeled"), ("get-out", "got out")];
        const OBJECTS: [&str; 3] = ["cucumber", "carrot", "knife"];
        let units: Vec<SentenceUnit> = steps
            .iter()
            .map(|&(v, o)| SentenceUnit::new(format!("the person {} the {}", VERBS[v].1, OBJECTS[o]), VERBS[v].0, OBJECTS[o]))
            .collect();
        let cfg = CohesionConfig {
            gender,
            merge_objects: flags[0],
            merge_verbs: flags[1],
            referring_expressions: flags[2],
            adverbials: flags[3],
        };
        let lex = Lexicon::bundled();
        let out = cohesive_sentences(&units, &cfg, &lex);
        prop_assert!(!out.is_empty() && out.len() <= units.len());
        if !flags[0] && !flags[1] {
            prop_assert_eq!(out.len(), units.len());
        }
        for s in &out {
            prop_assert!(s.chars().next().unwrap().is_uppercase(), "{}", s);
            prop_assert!(s.ends_with('.') && !s.ends_with(".."), "{}", s);
            if gender != Gender::Neutral {
                prop_assert!(!s.to_lowercase().contains("the person"), "{}", s);
            }
        }
        prop_assert_eq!(cohesive_sentences(&units, &cfg, &lex), out);
    }

    #[test]
    fn more_lattice_weight_never_abandons_the_likelier_path(p in 0.51f64..0.99, lo in 0.0f64..4.0, step in 0.0f64..4.0) {
        let f = egg_shells(p);
        let at = |lattice: f64| {
            let w = DecoderWeights { lattice, ..DecoderWeights::default() };
            decode(&f.lattice, &f.phrases, &f.lm, &w, None).unwrap().source
        };
        let likelier = tokens(&["cut", "off", "egg", "shells"]);
        let picks = |src: &[String]| src.windows(2).any(|w| w == ["egg", "shells"]);
        prop_assert!(picks(&likelier));
        if picks(&at(lo)) {
            prop_assert!(picks(&at(lo + step)));
        }
    }

    #[test]
    fn built_lattices_are_valid(seed in any::<u64>(), top_k in 1usize..6, prune in 0.0f64..0.5) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let schema = synth::schema();
        let marginals: Vec<Vec<f64>> = (0..schema.num_nodes())
            .map(|n| {
                let raw: Vec<f64> = (0..schema.num_states(n)).map(|_| rng.gen_range(0.0..1.0f64).powi(4)).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|x| x / z).collect()
            })
            .collect();
        let lattice = build_lattice(&marginals, &schema, &LatticeOptions { top_k, prune }).unwrap();
        prop_assert!(lattice.validate().is_ok());
        prop_assert!(lattice.edges().iter().all(|e| e.log_conf <= 1e-12));
        prop_assert!(!lattice.paths().is_empty());
    }
}
