use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn rfac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfac")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rfac-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn supply_chain_passes_all_fourteen_steps() {
    let o = rfac(&["scenario", "supply-chain", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("14 passed, 0 failed, 0 disrupted"), "{}", stdout(&o));
}

#[test]
fn every_scenario_passes_under_replay() {
    for name in ["supply-chain", "tickets", "hospital"] {
        let o = rfac(&["scenario", name, "--adversary", "replay", "--seed", "1"]);
        assert!(o.status.success(), "{name}: {}", stdout(&o));
    }
}

#[test]
fn scenario_output_is_deterministic() {
    let a = rfac(&["scenario", "hospital", "--seed", "5", "--adversary", "tamper"]);
    let b = rfac(&["scenario", "hospital", "--seed", "5", "--adversary", "tamper"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn transcript_is_json_lines() {
    let path = scratch("tickets.jsonl");
    let o = rfac(&["scenario", "tickets", "--transcript", path.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() > 50);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("direction").is_some() && v.get("frame").is_some());
    }
}

#[test]
fn property_suite_reports_and_exits_zero() {
    let path = scratch("lemma3.json");
    let o = rfac(&["properties", "lemma3", "--iterations", "20", "--transcript", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("stolen reader fails the factor check: 20/20"));
    let v: serde_json::Value = serde_json::from_str(fs::read_to_string(&path).unwrap().trim()).unwrap();
    assert_eq!(v["suite"], "Lemma3");
}

#[test]
fn unmet_threshold_exits_nonzero() {
    // the decoy suite needs at least 1000 frames
    let o = rfac(&["properties", "decoy", "--iterations", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] frames compared"));
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(!rfac(&["scenario", "parking"]).status.success());
    assert!(!rfac(&["properties", "lemma9"]).status.success());
    assert!(!rfac(&["scenario", "tickets", "--group", "huge"]).status.success());
}

#[test]
fn world_snapshot_roundtrip_is_byte_identical() {
    let (a, b) = (scratch("a.snap"), scratch("b.snap"));
    assert!(rfac(&["world", "save", a.to_str().unwrap(), "--scenario", "hospital"]).status.success());
    let o = rfac(&["world", "load", a.to_str().unwrap(), "--resave", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("domains:"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn corrupt_and_foreign_snapshots_fail() {
    let a = scratch("c.snap");
    assert!(rfac(&["world", "save", a.to_str().unwrap()]).status.success());
    let mut bytes = fs::read(&a).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&a, &bytes).unwrap();
    assert_eq!(rfac(&["world", "load", a.to_str().unwrap()]).status.code(), Some(2));

    let mut bytes = fs::read(&a).unwrap();
    bytes[9] ^= 0xff; // version
    fs::write(&a, &bytes).unwrap();
    let o = rfac(&["world", "load", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}
