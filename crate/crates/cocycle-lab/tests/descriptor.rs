use std::path::PathBuf;

use cocycle_lab::descriptor::{bundled, load_descriptor, Descriptor};
use cocycle_lab::Error;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("descriptors")
}

#[test]
fn bundled_files_are_canonical() {
    for (name, d) in bundled() {
        let path = dir().join(format!("{name}.json"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, d.to_canonical_json(), "{name} drifted from its constructor");
        let loaded = load_descriptor(&path).unwrap();
        assert_eq!(loaded.to_canonical_json(), text, "{name}");
    }
}

fn field_of(e: Error) -> String {
    match e {
        Error::Validation { field, .. } => field,
        other => panic!("expected a validation error, got {other}"),
    }
}

const TWO_SEGMENTS: &str = r#"{
  "kind": "continuum-periodic",
  "period": 1.0,
  "zero_nbhd": 0.1,
  "bases": {},
  "segments": [{"gap": LEN_A}, {"gap": LEN_B}]
}"#;

#[test]
fn negative_segment_is_rejected() {
    let text = TWO_SEGMENTS.replace("LEN_A", "-0.5").replace("LEN_B", "1.5");
    let err = Descriptor::from_json(&text).unwrap_err();
    assert_eq!(field_of(err), "segments[0]");
}

#[test]
fn deficit_is_named() {
    let text = TWO_SEGMENTS.replace("LEN_A", "0.5").replace("LEN_B", "0.25");
    let err = Descriptor::from_json(&text).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("deficit 2.5e-1"), "{msg}");
    assert_eq!(field_of(err), "segments");
}

#[test]
fn unknown_kind_and_bad_family() {
    assert!(Descriptor::from_json(r#"{"kind":"sphere"}"#).is_err());
    let bad = r#"{"kind":"discrete-family","n0":0.0,"n1":1,"expr":"t"}"#;
    assert_eq!(field_of(Descriptor::from_json(bad).unwrap_err()), "n0");
    let empty = r#"{"kind":"discrete-periodic","values":[]}"#;
    assert_eq!(field_of(Descriptor::from_json(empty).unwrap_err()), "values");
}

#[test]
fn periodic_view() {
    let free = load_descriptor(&dir().join("free.json")).unwrap();
    assert!(free.as_periodic().unwrap().is_discrete());
    let fam = load_descriptor(&dir().join("cosine-family.json")).unwrap();
    assert!(fam.as_periodic().is_err());
    assert_eq!(fam.family().unwrap().n1, 1);
}
