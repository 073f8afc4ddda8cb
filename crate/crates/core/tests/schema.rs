//! The published scene schema and the loader accept and reject the same documents.

use serde_json::{json, Value};

use s3forge::scene::{Scene, PRESETS};

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(include_str!("../schema/scene.schema.json")).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn preset_value(name: &str) -> Value {
    let p = PRESETS.iter().find(|p| p.name == name).unwrap();
    serde_json::from_str(&p.scene().to_json()).unwrap()
}

#[test]
fn presets_conform() {
    let v = validator();
    for p in &PRESETS {
        let doc = preset_value(p.name);
        let errors: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.name);
    }
}

type Edit = (&'static str, Box<dyn Fn(&mut Value)>);

#[test]
fn schema_and_loader_reject_the_same_mistakes() {
    let v = validator();
    let edits: Vec<Edit> = vec![
        ("24-cell", Box::new(|d| d["colour"] = json!("red"))),
        (
            "24-cell",
            Box::new(|d| d.as_object_mut().unwrap().remove("tube").map(|_| ()).unwrap()),
        ),
        ("24-cell", Box::new(|d| d["design"]["kind"] = json!("7-cell"))),
        (
            "24-cell",
            Box::new(|d| d["design"]["orientation"]["mode"] = json!("edge-centered")),
        ),
        ("24-cell", Box::new(|d| d["tube"]["radius"] = json!(0.1))),
        ("24-cell", Box::new(|d| d["target_bbox_mm"] = json!([90, 90]))),
        ("24-cell", Box::new(|d| d["target_bbox_mm"] = json!([90, -1, 90]))),
        ("24-cell", Box::new(|d| d["output"]["format"] = json!("ply"))),
        ("mobius", Box::new(|d| d["design"]["shell"]["grid"] = json!(16))),
        (
            "mobius",
            Box::new(|d| d["design"]["shell"]["strut_fraction"] = json!(0.95)),
        ),
        (
            "mobius",
            Box::new(|d| d["design"]["surface"]["kind"] = json!("boy-surface")),
        ),
        ("mobius", Box::new(|d| d["design"]["surface"]["twist"] = json!(1))),
        (
            "knotted-cog",
            Box::new(|d| d["design"]["cog"]["tooth_count"] = json!(2)),
        ),
        (
            "knotted-cog",
            Box::new(|d| d["design"]["surface"]["theta0"] = json!(2.0)),
        ),
        (
            "knotted-cog",
            Box::new(|d| d["frame"]["extra_rotation"] = json!([0, 1, 0])),
        ),
    ];
    for (i, (name, edit)) in edits.iter().enumerate() {
        let mut doc = preset_value(name);
        edit(&mut doc);
        assert!(!v.is_valid(&doc), "edit {i}: schema accepted");
        assert!(Scene::from_json(&doc.to_string()).is_err(), "edit {i}: loader accepted");
    }
}

#[test]
fn minimal_documents_are_accepted_by_both() {
    let v = validator();
    let doc = json!({
        "design": { "type": "polytope", "kind": "16-cell", "orientation": { "mode": "vertex-centered" }, "half": true },
        "tube": { "radius_s3": 0.05, "segments_along": 4, "segments_around": 8 },
        "target_bbox_mm": [50, 50, 50]
    });
    assert!(v.is_valid(&doc));
    let s = Scene::from_json(&doc.to_string()).unwrap();
    assert_eq!(s.frame.pole, [0.0, 0.0, 0.0, 1.0]);
    assert_eq!(s.frame.extra_rotation, [1.0, 0.0, 0.0, 0.0]);
}
