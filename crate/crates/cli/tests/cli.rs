use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn duffin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duffin"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = duffin(dir, args);
    assert!(
        out.status.success(),
        "duffin {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    duffin(dir, args).status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Sample data plus a key built from the four base models, shared by the
/// tests in this file.
fn workspace() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        ok(&dir, &["sample-data", "--out", "data"]);
        let mut args = vec!["key-build", "--pool", "data/pool.json", "--triggers", "data/triggers.json"];
        let models: Vec<String> = (0..4).map(|f| format!("data/models/fam{f}-base.json")).collect();
        for m in &models {
            args.extend(["--model", m.as_str()]);
        }
        args.extend(["-q", "10", "--out", "key.json"]);
        ok(&dir, &args);
        dir
    })
}

#[test]
fn outputs_embed_the_command_line() {
    let dir = workspace();
    let key = read_json(&dir.join("key.json"));
    assert_eq!(key["kind"], "secret_key");
    assert_eq!(key["run_config"]["command"]["command"], "key-build");
    assert_eq!(key["run_config"]["command"]["questions_per_domain"], 10);
    assert_eq!(key["payload"]["questions_per_domain"], 10);
}

#[test]
fn extract_verify_roundtrip() {
    let dir = workspace();
    for m in ["fam1-base", "fam1-v1", "fam2-base"] {
        ok(dir, &["extract", "--key", "key.json", "--model", &format!("data/models/{m}.json"), "--out", "kfp"]);
    }
    let out = ok(
        dir,
        &[
            "verify", "--protected", "kfp/fam1-base.knowledge.json", "--suspect", "kfp/fam1-v1.knowledge.json",
            "--negative", "kfp/fam2-base.knowledge.json", "--level", "knowledge", "--threshold", "0.3",
            "--out", "verdict.json",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("pirated = true"));
    let v = read_json(&dir.join("verdict.json"));
    assert_eq!(v["payload"]["verdict"]["is_pirated"], true);
    assert_eq!(v["payload"]["verdict"]["provenance"]["suspect_model"], "fam1-v1");

    ok(
        dir,
        &[
            "verify", "--protected", "kfp/fam1-base.knowledge.json", "--suspect", "kfp/fam2-base.knowledge.json",
            "--level", "knowledge", "--threshold", "0.3", "--out", "verdict2.json",
        ],
    );
    assert_eq!(read_json(&dir.join("verdict2.json"))["payload"]["verdict"]["is_pirated"], false);
}

#[test]
fn usage_errors_exit_2() {
    let dir = workspace();
    assert_eq!(code(dir, &["extract", "--key", "key.json"]), 2);
    assert_eq!(code(dir, &["verify", "--level", "sideways"]), 2);
    assert_eq!(
        code(dir, &["extract", "--key", "key.json", "--model", "data/models/fam0-base.json", "--level", "trigger", "--out", "x"]),
        2
    );
    assert_eq!(code(dir, &["extract", "--key", "data/pool.json", "--model", "data/models/fam0-base.json", "--out", "x"]), 2);
    assert_eq!(code(dir, &["extract", "--key", "missing.json", "--model", "data/models/fam0-base.json", "--out", "x"]), 2);
}

#[test]
fn corrupt_files_exit_2() {
    let dir = workspace();
    std::fs::write(dir.join("broken.json"), "{\"version\": \"duffin/1\", \"kind\": ").unwrap();
    let out = duffin(dir, &["attack", "--key", "broken.json", "--model", "data/rewriter.json", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.json"));
}

#[test]
fn incompatible_fingerprints_exit_4() {
    let dir = workspace();
    ok(
        dir,
        &["key-build", "--pool", "data/pool.json", "--triggers", "data/triggers.json", "--model",
          "data/models/fam0-base.json", "-q", "5", "--seed", "9", "--out", "other_key.json"],
    );
    ok(dir, &["extract", "--key", "key.json", "--model", "data/models/fam3-base.json", "--out", "inc_a"]);
    ok(dir, &["extract", "--key", "other_key.json", "--model", "data/models/fam3-v0.json", "--out", "inc_b"]);
    assert_eq!(
        code(
            dir,
            &["verify", "--protected", "inc_a/fam3-base.knowledge.json", "--suspect", "inc_b/fam3-v0.knowledge.json",
              "--level", "knowledge", "--out", "v.json"],
        ),
        4
    );
}

#[test]
fn unreachable_endpoint_exits_3() {
    let dir = workspace();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let handle = format!(
        r#"{{"version": "duffin/1", "kind": "model_handle", "payload": {{
            "id": "offline", "backend": {{"remote_endpoint": {{"base_url": "http://127.0.0.1:{port}/v1", "model": "m"}}}}
        }}}}"#
    );
    std::fs::write(dir.join("offline.json"), handle).unwrap();
    assert_eq!(code(dir, &["extract", "--key", "key.json", "--model", "offline.json", "--out", "off", "--max-parallel", "2"]), 3);
}

#[test]
fn divergent_training_exits_5() {
    let dir = workspace();
    let mut config = read_json(&dir.join("data/train.json"));
    config["payload"]["tau"] = 1e-3.into();
    config["payload"]["epochs"] = 1.into();
    std::fs::write(dir.join("hot.json"), serde_json::to_vec(&config).unwrap()).unwrap();
    let out = duffin(
        dir,
        &["train", "--corpus", "data/trigger_corpus.json", "--config", "hot.json", "--lr", "1.7976931348623157e308", "--out", "e.json"],
    );
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("e.json").exists());
}

#[test]
fn attack_rewrites_stems_only() {
    let dir = workspace();
    ok(dir, &["attack", "--key", "key.json", "--model", "data/rewriter.json", "--out", "key_pp.json"]);
    let before = read_json(&dir.join("key.json"))["payload"].clone();
    let after = read_json(&dir.join("key_pp.json"))["payload"].clone();
    assert_eq!(before["version"], after["version"]);
    let (qb, qa) = (before["knowledge"].as_array().unwrap(), after["knowledge"].as_array().unwrap());
    assert_eq!(qb.len(), qa.len());
    assert!(qb.iter().zip(qa).any(|(b, a)| b["stem"] != a["stem"]));
    for (b, a) in qb.iter().zip(qa) {
        assert_eq!(b["choices"], a["choices"]);
        assert_eq!(b["id"], a["id"]);
    }
}

#[test]
fn simulate_accepts_a_config_file() {
    let dir = workspace();
    let mut config = read_json(&dir.join("data/experiment.json"));
    config["payload"]["levels"] = serde_json::json!(["knowledge"]);
    config["payload"]["families"] = 3.into();
    std::fs::write(dir.join("exp.json"), serde_json::to_vec(&config).unwrap()).unwrap();
    ok(dir, &["simulate", "--config", "exp.json", "--seed", "4", "--out", "report.json"]);
    let r = read_json(&dir.join("report.json"));
    assert_eq!(r["kind"], "experiment_report");
    assert_eq!(r["payload"]["config"]["seed"], 4);
    assert_eq!(r["payload"]["levels"].as_array().unwrap().len(), 1);
}
