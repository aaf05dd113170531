use passgauge::corpus::CleanPassword;
use passgauge::features::featurize;
use passgauge::model_file::{ModelFile, ModelFileError};
use passgauge::pipeline::{train, TrainOptions};
use passgauge::scoring::{score, ScoreError, Strength};
use passgauge::{Hyperparams, ModelKind};
use serde_json::Value;

fn small_model(kind: ModelKind) -> ModelFile {
    let stems = ["123456", "password", "Abcdef12!", "qwerty", "Zz9!zz9!zz", "11111111", "a1b2c3d4e5", "X9!x9!x9!xQ"];
    let corpus: Vec<CleanPassword> = (0..240)
        .map(|i| CleanPassword::new(format!("{}{}", stems[i % stems.len()], i), 1).unwrap())
        .collect();
    let data = featurize(&corpus).unwrap();
    let mut hp = Hyperparams::defaults(kind);
    if kind == ModelKind::Mlp {
        hp.set("max_iter", "50").unwrap();
    }
    train(&hp, &data, &TrainOptions::default(), "digest".into(), Some("2024-01-01T00:00:00Z".into())).unwrap()
}

fn edit(model: &ModelFile, f: impl FnOnce(&mut Value)) -> Vec<u8> {
    let mut v: Value = serde_json::from_slice(&model.to_json()).unwrap();
    f(&mut v);
    serde_json::to_vec(&v).unwrap()
}

#[test]
fn every_kind_round_trips_byte_for_byte() {
    for kind in ModelKind::ALL {
        let m = small_model(kind);
        let bytes = m.to_json();
        let back = ModelFile::from_json(&bytes).unwrap();
        assert_eq!(back, m, "{kind}");
        assert_eq!(back.to_json(), bytes, "{kind}");
        assert_eq!(back.summary().model_kind, kind);
    }
}

#[test]
fn rejects_version_and_shape_problems() {
    let m = small_model(ModelKind::Tree);
    let missing = edit(&m, |v| {
        v.as_object_mut().unwrap().remove("format_version");
    });
    assert!(matches!(ModelFile::from_json(&missing), Err(ModelFileError::MissingVersion)));
    let future = edit(&m, |v| v["format_version"] = 2.into());
    assert!(matches!(ModelFile::from_json(&future), Err(ModelFileError::UnsupportedVersion(2))));
    let wrong_kind = edit(&m, |v| v["model_kind"] = "rf".into());
    assert!(ModelFile::from_json(&wrong_kind).is_err());
    let short_scaler = edit(&m, |v| {
        v["scaler"]["mean"].as_array_mut().unwrap().pop();
    });
    assert!(ModelFile::from_json(&short_scaler).is_err());
    assert!(ModelFile::from_json(b"{not json").is_err());
}

#[test]
fn scoring_reports_rule_and_model_views() {
    let m = small_model(ModelKind::LogReg);
    let r = score("Abcdef12!", &m).unwrap();
    assert_eq!(r.rule_label, Strength::Strong);
    assert!(r.failed_rules.is_empty());
    let p = r.probability.unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(r.label, Strength::from(u8::from(p >= 0.5)));

    let svm = score("123456", &small_model(ModelKind::Svm)).unwrap();
    assert!(svm.probability.is_none());
    assert_eq!(svm.rule_label, Strength::Weak);

    match score("pass word", &m) {
        Err(ScoreError::Invalid(e)) => assert_eq!(e.rule, "illegal_character"),
        other => panic!("expected validation error, got {other:?}"),
    }
}
