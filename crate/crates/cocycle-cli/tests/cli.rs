use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cocycle_lab::deform::PaddingSpec;
use cocycle_lab::descriptor::load_descriptor;

fn descriptor(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cocycle-lab/descriptors").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocycle-lab")).args(args).env_remove("COCYCLE_LAB_CACHE").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Lines after the two `#` comment lines.
fn csv_body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn free_discrete_bands() {
    let o = run(&["bands", "--potential", descriptor("free").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# cocycle-lab "));
    assert!(lines.next().unwrap().starts_with("# config {"));
    assert_eq!(csv_body(&text), ["E_lo,E_hi", "-2,2"]);
}

#[test]
fn periodic2_has_two_bands() {
    let o = run(&["bands", "--potential", descriptor("periodic2").to_str().unwrap(), "--tol", "1e-12"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let body = csv_body(&text);
    assert_eq!(body.len(), 3);
    // V = (0, 1): discriminant E(E - 1) - 2, so edges at (1 ± sqrt(17))/2 and (1 ± 1)/2.
    let r17 = 17f64.sqrt();
    let want = [[(1.0 - r17) / 2.0, 0.0], [1.0, (1.0 + r17) / 2.0]];
    for (row, w) in body[1..].iter().zip(want) {
        let got: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((got[0] - w[0]).abs() < 1e-11 && (got[1] - w[1]).abs() < 1e-11, "{row} vs {w:?}");
    }
}

#[test]
fn deform_pad_period_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("padded.json");
    let o = run(&[
        "deform",
        "pad",
        "--in",
        descriptor("v0").to_str().unwrap(),
        "--delta",
        "0.05",
        "--N",
        "2",
        "--n",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let base = load_descriptor(&descriptor("v0")).unwrap();
    let padded = load_descriptor(&out).unwrap();
    let spec = PaddingSpec::new(0.05, 2, 3).unwrap();
    let want = spec.padded_period(base.as_periodic().unwrap().period());
    assert_eq!(padded.as_periodic().unwrap().period(), want);

    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("padded.json.run.json")).unwrap()).unwrap();
    assert_eq!(side["command"], "deform pad");
    assert_eq!(side["config"]["N"], 2);
    assert!(side["config"].get("out").is_none());
}

#[test]
fn exit_codes() {
    let free = descriptor("free");
    let free = free.to_str().unwrap();
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["bands", "--potential", "/nonexistent/v.json"]).status.code(), Some(2));
    assert_eq!(run(&["bands", "--potential", free, "--emin", "1", "--emax", "0"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "parseval"]).status.code(), Some(2), "--seed is required");
    let fam = descriptor("cosine-family");
    let o = run(&["deform", "repeat", "--in", fam.to_str().unwrap(), "--n", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn malformed_descriptor_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"kind": "discrete-periodic", "values": []}"#).unwrap();
    let o = run(&["bands", "--potential", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("values"));
}

#[test]
fn cache_hit_is_byte_identical() {
    let cache = tempfile::tempdir().unwrap();
    let v = descriptor("periodic3");
    let args = ["sweep", "--potential", v.to_str().unwrap(), "--points", "41"];
    let go = || {
        Command::new(env!("CARGO_BIN_EXE_cocycle-lab"))
            .args(args)
            .env("COCYCLE_LAB_CACHE", cache.path())
            .output()
            .unwrap()
    };
    let first = go();
    assert!(first.status.success());
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 1);
    let second = go();
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout, run(&args).stdout, "cached and uncached runs differ");
}

#[test]
fn report_shape() {
    let o = run(&["verify", "parseval", "--seed", "3", "--grid", "4096"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["command", "config", "result", "tool", "version"]);
    assert_eq!(doc["config"]["seed"], 3);
    assert_eq!(doc["command"], "verify parseval");
}
