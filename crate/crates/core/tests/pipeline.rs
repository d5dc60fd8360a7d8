use std::collections::BTreeSet;
use std::sync::OnceLock;

use latticedesc::data::{Level, Split};
use latticedesc::pipeline::{
    cmd_evaluate, cmd_train, describe_split, load_artifacts, score_descriptions, write_synthetic, Artifacts, Describer,
    DescribeOptions, PipelineConfig,
};
use latticedesc::synth::{generate, SynthConfig};
use latticedesc::training::{train_crf, TrainConfig};
use latticedesc::Error;

fn small() -> SynthConfig {
    SynthConfig {
        videos_per_dish: 6,
        ..SynthConfig::default()
    }
}

/// A trained synthetic run shared by every test in this file.
fn trained() -> &'static PipelineConfig {
    static RUN: OnceLock<(tempfile::TempDir, PipelineConfig)> = OnceLock::new();
    let (_, cfg) = RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_synthetic(&generate(&small()), dir.path()).unwrap();
        cmd_train(&cfg).unwrap();
        (dir, cfg)
    });
    cfg
}

fn at(level: Level) -> PipelineConfig {
    PipelineConfig {
        level,
        ..trained().clone()
    }
}

#[test]
fn missing_gold_is_a_training_error() {
    let mut train = generate(&small()).train;
    let seg = train.videos.iter_mut().flat_map(|v| v.segments.iter_mut()).next().unwrap();
    seg.gold = None;
    match train_crf(&train, &TrainConfig::default()) {
        Err(e @ Error::Module { module, .. }) => {
            assert_eq!(module, "crf_training");
            assert!(e.to_string().starts_with("crf_training"));
        }
        other => panic!("expected a crf_training error, got {other:?}"),
    }
}

#[test]
fn single_level_gives_one_sentence() {
    let out = describe_split(&at(Level::Single), Split::Test, None).unwrap();
    assert!(!out.descriptions.is_empty());
    for d in &out.descriptions {
        assert_eq!(d.segments.iter().filter(|s| s.selected).count(), 1, "{}", d.video_id);
        assert!(d.sentences.len() <= 1);
        if !d.sentences.is_empty() {
            assert!(!d.paragraph.is_empty());
        }
    }
}

#[test]
fn short_level_keeps_at_most_the_surviving_segments() {
    let cfg = at(Level::Short);
    let arts = load_artifacts(&cfg).unwrap();
    let lexicon = cfg.lexicon().unwrap();
    let genders = cfg.genders().unwrap();
    let describer = Describer {
        artifacts: &arts,
        model: arts.level(Level::Short).unwrap(),
        opts: DescribeOptions::from_config(&cfg),
        lexicon: &lexicon,
        genders: &genders,
    };
    let mut video = cfg.load_split(Split::Test).unwrap().videos.remove(0);
    video.segments.truncate(2);
    let d = describer.describe(&video).unwrap();
    assert!(d.retained.len() <= 2);
    assert_eq!(d.segments.iter().filter(|s| s.selected).count(), d.retained.len());
    assert_eq!(
        d.sentences.len(),
        d.segments.iter().filter(|s| s.sentence.is_some()).count()
    );
}

#[test]
fn own_output_as_reference_scores_100() {
    let out = describe_split(&at(Level::Detailed), Split::Test, None).unwrap();
    let mut d = out.dataset.clone();
    for v in &mut d.videos {
        let desc = out.descriptions.iter().find(|x| x.video_id == v.video_id).unwrap();
        assert!(desc.sentences.iter().map(|s| s.split_whitespace().count()).sum::<usize>() >= 4);
        *v.sentences.get_mut(Level::Detailed) = vec![desc.sentences.join(" ")];
    }
    let r = score_descriptions(&out.descriptions, &d, Level::Detailed, false).unwrap();
    assert!((r.description.score - 100.0).abs() < 1e-9, "{}", r.description.summary());
}

#[test]
fn metrics_file_has_the_documented_keys() {
    let mut cfg = at(Level::Single);
    let out = tempfile::tempdir().unwrap();
    cfg.out = out.path().to_path_buf();
    cmd_evaluate(&cfg, Split::Test).unwrap();
    let text = std::fs::read_to_string(out.path().join("metrics.single.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> = [
        "split",
        "level",
        "segments",
        "videos",
        "sentences",
        "warnings",
        "bleu",
        "node_accuracy",
        "topic_consistency",
        "retrieval",
    ]
    .into();
    assert_eq!(keys, expected);
    assert!(v["retrieval"]["description"]["score"].is_number());
    assert!(v["bleu"]["sentence"]["score"].is_number());
    assert!(out.path().join("descriptions.single.txt").exists());
    assert!(out.path().join("trace.single.jsonl").exists());
}

#[test]
fn reloaded_artifacts_save_identically() {
    let cfg = trained();
    let arts = load_artifacts(cfg).unwrap();
    let copy = tempfile::tempdir().unwrap();
    let files = arts.save(copy.path()).unwrap();
    assert!(files.len() >= 6);
    for f in &files {
        let a = std::fs::read(cfg.models.join(f)).unwrap();
        let b = std::fs::read(copy.path().join(f)).unwrap();
        assert!(a == b, "{f} changed after a load/save round trip");
    }
    let again = Artifacts::load(copy.path(), &arts.schema).unwrap();
    assert_eq!(again.crf.params(), arts.crf.params());
    assert_eq!(again.levels.keys().collect::<Vec<_>>(), arts.levels.keys().collect::<Vec<_>>());
}

#[test]
fn train_log_records_each_stage() {
    let log = std::fs::read_to_string(trained().models.join("train.log")).unwrap();
    let events: BTreeSet<String> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event"].as_str().unwrap().to_owned())
        .collect();
    for e in ["crf", "tfidf", "background", "phrases", "lm", "weights"] {
        assert!(events.contains(e), "no {e} event");
    }
}
