use latticedesc_demo::{cohesion, decode_lattice, segment_stream};
use serde_json::Value;

fn parse(s: String) -> Value {
    let v: Value = serde_json::from_str(&s).unwrap();
    assert!(v.get("error").is_none(), "{v}");
    v
}

#[test]
fn segmentation_finds_three_blocks_and_drops_background() {
    let v = parse(segment_stream(4, 0.1, 0.982, true));
    let spans = v["spans"].as_array().unwrap();
    let kept = v["kept"].as_array().unwrap();
    let bg = v["background"].as_array().unwrap();
    let (b0, b1) = (bg[0].as_u64().unwrap(), bg[1].as_u64().unwrap());
    for (s, k) in spans.iter().zip(kept) {
        let (s0, s1) = (s[0].as_u64().unwrap(), s[1].as_u64().unwrap());
        let overlap = s1.min(b1).saturating_sub(s0.max(b0));
        if 2 * overlap > s1 - s0 {
            assert_eq!(k, false);
        } else {
            assert_eq!(k, true);
        }
    }
    assert_eq!(v["dominant"].as_array().unwrap().len() as u64, v["frames"].as_u64().unwrap());
}

#[test]
fn language_model_overrides_lattice_confidence() {
    let v = parse(decode_lattice(0.6, 1.0, 1.0, 1.0, 0.0));
    assert_eq!(v["best"]["output"], "the person cut off the cucumber");
    let paths = v["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 2);
    let best = v["best"]["score"].as_f64().unwrap();
    assert!(paths.iter().all(|p| p["score"].as_f64().unwrap() <= best + 1e-12));

    let v = parse(decode_lattice(0.6, 1.0, 0.0, 1.0, 0.0));
    assert_eq!(v["best"]["output"], "the person cut off the egg shells");
}

#[test]
fn bad_confidence_is_reported() {
    let v: Value = serde_json::from_str(&decode_lattice(1.5, 1.0, 1.0, 1.0, 0.0)).unwrap();
    assert!(v["error"].as_str().unwrap().contains("confidence"));
}

#[test]
fn cohesion_merges_and_scores() {
    let reference = "A woman got out a cucumber from the fridge. Next, she washed the cucumber. \
                     The woman got out a peeler and a knife from the drawer. Finally, she peeled and sliced the cucumber.";
    let v = parse(cohesion("female", true, true, true, reference));
    assert_eq!(v["paragraph"], reference);
    assert_eq!(v["bleu"]["score"].as_f64().unwrap(), 100.0);

    let v = parse(cohesion("neutral", false, false, false, ""));
    assert_eq!(v["sentences"].as_array().unwrap().len(), 6);
    assert!(v["bleu"].is_null());

    let v: Value = serde_json::from_str(&cohesion("robot", true, true, true, "")).unwrap();
    assert!(v.get("error").is_some());
}
