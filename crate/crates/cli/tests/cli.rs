use std::path::Path;
use std::process::{Command, Output};

fn latticedesc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latticedesc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path) -> String {
    dir.join("config.json").display().to_string()
}

#[test]
fn missing_config_exits_2() {
    let out = latticedesc(&["describe", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flag_exits_2() {
    let out = latticedesc(&["describe", "--config", "x.json", "--level", "medium"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn untrained_models_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = latticedesc(&["synth", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let out = latticedesc(&["describe", "--config", &config(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    latticedesc(&["synth", "--out", dir.path().to_str().unwrap()]);
    std::fs::write(dir.path().join("train.jsonl"), "{not json\n").unwrap();
    let out = latticedesc(&["train", "--config", &config(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_describe_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    latticedesc(&["synth", "--out", dir.path().to_str().unwrap()]);
    let out = latticedesc(&["train", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["crf.json", "tfidf.json", "background.json", "single.phrases", "single.arpa", "single.weights.json"] {
        assert!(dir.path().join("models").join(f).exists(), "{f}");
    }

    let out = latticedesc(&["describe", "--config", &cfg, "--level", "single", "--video", "soup-08"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let (id, paragraph) = text.trim_end().split_once('\t').unwrap();
    assert_eq!(id, "soup-08");
    assert_eq!(paragraph.matches('.').count(), 1);
    assert!(dir.path().join("out/trace.single.jsonl").exists());

    let out = latticedesc(&["describe", "--config", &cfg, "--video", "nope"]);
    assert_eq!(out.status.code(), Some(2));

    let out = latticedesc(&["evaluate", "--config", &cfg, "--level", "short", "--beam", "20"]);
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["level"], "short");
    assert!(m["bleu"]["description"]["score"].as_f64().unwrap() > 0.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("per-description BLEU = "));
}
