use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn vfc() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vfc"));
    for (key, _) in std::env::vars() {
        if key.starts_with("VFC_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn vfc");
    assert!(
        out.status.success(),
        "vfc failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn last_stderr_json(out: &Output) -> Value {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    serde_json::from_str(err.lines().last().expect("stderr line")).expect("machine-readable error")
}

fn mini_store(dir: &Path) -> PathBuf {
    let store = dir.join("mini.vfce");
    run(vfc().args(["ingest", "--normalize", "--vectors"]).arg(fixture("mini_vectors.jsonl")).arg("--out").arg(&store));
    store
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = vfc().args(["classify", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage:"), "{err}");
    assert_eq!(last_stderr_json(&out)["kind"], "usage");
}

#[test]
fn missing_subcommand_and_bad_values_are_usage_errors() {
    assert_eq!(vfc().output().unwrap().status.code(), Some(2));
    let out = vfc().args(["evaluate", "--predictions", "p", "--truths", "t", "--mode", "sideways"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = vfc()
        .args(["build-index", "--corpus"])
        .arg(fixture("mini_corpus.jsonl"))
        .arg("--embeddings")
        .arg(dir.path().join("absent.vfce"))
        .arg("--out")
        .arg(dir.path().join("idx.vfci"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = last_stderr_json(&out);
    assert_eq!(err["kind"], "embedding");
    assert!(!err["error"].as_str().unwrap().is_empty());
    assert!(!dir.path().join("idx.vfci").exists());
}

#[test]
fn build_index_requires_a_provider() {
    let dir = tempfile::tempdir().unwrap();
    let out = vfc()
        .args(["build-index", "--corpus"])
        .arg(fixture("mini_corpus.jsonl"))
        .arg("--out")
        .arg(dir.path().join("idx.vfci"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(last_stderr_json(&out)["kind"], "usage");
}

#[test]
fn build_index_on_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let store = mini_store(dir.path());
    let index = dir.path().join("idx.vfci");
    run(vfc().args(["build-index", "--corpus"]).arg(fixture("mini_corpus.jsonl")).arg("--embeddings").arg(&store).arg("--out").arg(&index));
    let bytes = std::fs::read(&index).unwrap();
    assert_eq!(&bytes[..4], b"VFCI");

    let out = run(vfc()
        .args(["classify", "--k", "2", "--index"])
        .arg(&index)
        .arg("--embeddings")
        .arg(&store)
        .arg("--queries")
        .arg(fixture("mini_queries.jsonl")));
    let labels: Vec<(String, String)> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["label"].as_str().unwrap().to_string())
        })
        .collect();
    let want = [("q1", "fox"), ("q2", "dog"), ("q3", "fox")];
    assert_eq!(labels, want.map(|(a, b)| (a.to_string(), b.to_string())));
}

#[test]
fn config_precedence_is_flag_env_file_default() {
    let dir = tempfile::tempdir().unwrap();
    let store = mini_store(dir.path());
    let index = dir.path().join("idx.vfci");
    run(vfc().args(["build-index", "--corpus"]).arg(fixture("mini_corpus.jsonl")).arg("--embeddings").arg(&store).arg("--out").arg(&index));
    let conf = dir.path().join("vfc.conf");
    std::fs::write(&conf, "# test\nk = 1\nmin_count = 1\n").unwrap();

    let retrieved = |extra: &[&str], env_k: Option<&str>| -> usize {
        let mut cmd = vfc();
        cmd.arg("classify").arg("--index").arg(&index).arg("--embeddings").arg(&store);
        cmd.arg("--queries").arg(fixture("mini_queries.jsonl")).arg("--config").arg(&conf).args(extra);
        if let Some(k) = env_k {
            cmd.env("VFC_K", k);
        }
        let out = run(&mut cmd);
        let first: Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().lines().next().unwrap()).unwrap();
        first["retrieved"].as_array().unwrap().len()
    };
    assert_eq!(retrieved(&[], None), 1);
    assert_eq!(retrieved(&[], Some("3")), 3);
    assert_eq!(retrieved(&["--k", "2"], Some("3")), 2);

    // Without a config file the built-in K=10 applies, clamped to the corpus.
    let out = run(vfc()
        .args(["classify", "--min-count", "1", "--index"])
        .arg(&index)
        .arg("--embeddings")
        .arg(&store)
        .arg("--queries")
        .arg(fixture("mini_queries.jsonl")));
    let first: Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["retrieved"].as_array().unwrap().len(), 4);
}

#[test]
fn manifest_validation_lists_dangling_refs() {
    let dir = tempfile::tempdir().unwrap();
    let store = mini_store(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(
        &manifest,
        r#"{"name":"mini","entries":[{"id":"a","image_ref":"img-fox","label":"fox"},{"id":"b","image_ref":"img-cat","label":"cat"}]}"#,
    )
    .unwrap();
    let out = vfc().args(["ingest", "--manifest"]).arg(&manifest).arg("--embeddings").arg(&store).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["dangling"], serde_json::json!([{"id": "b", "reference": "img-cat"}]));
}

#[test]
fn stats_emit_corpus_stats_json() {
    let out = run(vfc().args(["stats", "--corpus"]).arg(fixture("mini_corpus.jsonl")));
    let stats: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["captions"], 4);
    // red fox snow red fox jumping brown dog beach brown dog running
    assert_eq!(stats["tokens"], 12);
    assert_eq!(stats["unique_words"], 8);
}

struct World {
    dir: tempfile::TempDir,
}

impl World {
    const SEED: &'static str = "7";

    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        run(vfc().args(["synth", "--seed", Self::SEED, "--captions", "1000", "--num-queries", "100", "--out-dir"]).arg(dir.path()));
        let w = World { dir };
        run(vfc()
            .args(["build-index", "--structure", "partitioned", "--partitions", "8", "--seed", Self::SEED, "--corpus"])
            .arg(w.path("corpus.jsonl"))
            .arg("--embeddings")
            .arg(w.path("embeddings.vfce"))
            .arg("--out")
            .arg(w.path("idx.vfci")));
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn classify(&self, provider: &[&str], out: &str) -> Vec<u8> {
        run(vfc()
            .arg("classify")
            .arg("--index")
            .arg(self.path("idx.vfci"))
            .args(provider)
            .arg("--manifest")
            .arg(self.path("manifest.json"))
            .arg("--out")
            .arg(self.path(out)));
        std::fs::read(self.path(out)).unwrap()
    }

    fn store_args(&self) -> Vec<String> {
        vec!["--embeddings".into(), self.path("embeddings.vfce").to_string_lossy().into_owned()]
    }
}

#[test]
fn synthetic_pipeline_matches_golden_metrics() {
    let w = World::new();
    let store = w.store_args();
    let store: Vec<&str> = store.iter().map(String::as_str).collect();
    let first = w.classify(&store, "p1.jsonl");
    let report = w.path("report.json");
    run(vfc()
        .arg("evaluate")
        .arg("--predictions")
        .arg(w.path("p1.jsonl"))
        .arg("--truths")
        .arg(w.path("truths.jsonl"))
        .args(&store)
        .arg("--out")
        .arg(&report));
    let got: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(fixture("golden_synthetic_metrics.json")).unwrap()).unwrap();
    for key in ["samples", "cluster_accuracy", "cluster_mode", "semantic_similarity", "semantic_iou"] {
        assert_eq!(got[key], golden[key], "{key}");
    }
    for class in got["per_class"].as_array().unwrap() {
        let label = class["label"].as_str().unwrap();
        assert_eq!(class["count"], golden["per_class"][label], "{label}");
    }
    assert_eq!(got["per_class"].as_array().unwrap().len(), 10);

    // Same inputs, seed and config give byte-identical output.
    assert_eq!(w.classify(&store, "p2.jsonl"), first);
}

#[test]
fn classify_then_evaluate_equals_single_point_ablation() {
    let w = World::new();
    let store = w.store_args();
    let store: Vec<&str> = store.iter().map(String::as_str).collect();
    w.classify(&store, "p.jsonl");
    let piped = run(vfc()
        .arg("evaluate")
        .arg("--predictions")
        .arg(w.path("p.jsonl"))
        .arg("--truths")
        .arg(w.path("truths.jsonl"))
        .args(&store));
    let piped: Value = serde_json::from_slice(&piped.stdout).unwrap();

    let csv = run(vfc()
        .args(["ablate", "--variable", "alpha", "--values", "0.7", "--index"])
        .arg(w.path("idx.vfci"))
        .args(&store)
        .arg("--manifest")
        .arg(w.path("manifest.json"))
        .arg("--reports")
        .arg(w.path("reports.json")));
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(w.path("reports.json")).unwrap()).unwrap();
    assert_eq!(reports[0]["value"], "0.7");
    assert_eq!(reports[0]["report"], piped);
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("variable,value,metric,score\nalpha,0.7,cluster_accuracy,1\n"), "{csv}");
}

#[test]
fn k_sweep_writes_one_row_per_value_and_metric() {
    let w = World::new();
    let store = w.store_args();
    let out = run(vfc()
        .args(["ablate", "--no-similarity", "--variable", "k", "--values", "1,2,5,10,20", "--index"])
        .arg(w.path("idx.vfci"))
        .args(&store)
        .arg("--manifest")
        .arg(w.path("manifest.json")));
    let csv = String::from_utf8(out.stdout).unwrap();
    let ca: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.contains("cluster_accuracy"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ca.len(), 5);
    assert_eq!(csv.lines().count(), 1 + 10);
    assert!(ca[3] >= ca[0], "{csv}");
}

struct Stub(Child);

impl Drop for Stub {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_stub(args: &[&str]) -> (Stub, String) {
    let mut child = vfc()
        .args(["serve-stub", "--bind", "127.0.0.1:0", "--workers", "4"])
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line
        .strip_prefix("listening on ")
        .and_then(|r| r.split_whitespace().next())
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    (Stub(child), url)
}

#[test]
fn stub_server_run_equals_store_run() {
    let w = World::new();
    let store = w.store_args();
    let store: Vec<&str> = store.iter().map(String::as_str).collect();
    let from_store = w.classify(&store, "store.jsonl");
    let (_stub, url) = start_stub(&["--synthetic", "--seed", World::SEED, "--captions", "1000", "--num-queries", "100"]);
    let from_remote = w.classify(&["--remote", &url, "--dim", "128"], "remote.jsonl");
    assert_eq!(String::from_utf8(from_remote).unwrap(), String::from_utf8(from_store).unwrap());
}

#[test]
fn hash_stub_is_deterministic_and_honors_dim() {
    let dir = tempfile::tempdir().unwrap();
    let (_stub, url) = start_stub(&["--dim", "12"]);
    let index = dir.path().join("idx.vfci");
    let remote = ["--remote", url.as_str(), "--dim", "12"];
    run(vfc().args(["build-index", "--corpus"]).arg(fixture("mini_corpus.jsonl")).args(remote).arg("--out").arg(&index));
    let again = dir.path().join("again.vfci");
    run(vfc().args(["build-index", "--corpus"]).arg(fixture("mini_corpus.jsonl")).args(remote).arg("--out").arg(&again));
    assert_eq!(std::fs::read(&index).unwrap(), std::fs::read(&again).unwrap());

    let out = vfc()
        .args(["build-index", "--corpus"])
        .arg(fixture("mini_corpus.jsonl"))
        .args(["--remote", url.as_str(), "--dim", "16", "--out"])
        .arg(dir.path().join("bad.vfci"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = last_stderr_json(&out);
    assert_eq!(err["kind"], "index");
    assert!(err["error"].as_str().unwrap().contains("dimension"), "{err}");
}
