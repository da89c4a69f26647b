use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn silico(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silico"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn silico")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn fixture(dir: &Path) {
    let out = silico(
        &["fixture-gen", "--out", "fx", "--preset", "themed", "--themes", "3", "--per-theme", "40"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const RUN: [&str; 12] = [
    "--snapshot", "fx/corpus.jsonl", "--dim", "256", "--k", "3", "--iterations", "300", "--no-png", "--perplexity",
    "20", "--restarts",
];

fn pipeline(dir: &Path, outdir: &str, seed: &str, extra: &[&str]) -> Output {
    let mut args = vec!["pipeline", "--outdir", outdir, "--seed", seed];
    args.extend(RUN);
    args.push("4");
    args.extend(extra);
    silico(&args, dir)
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = silico(&["embed", "--outdir", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("preprocess"));
}

#[test]
fn invalid_settings_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = silico(&["cluster", "--outdir", "run", "--k-min", "5", "--k-max", "3"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(dir.path().join("bad.toml"), "master_seed = \"seven\"\n").unwrap();
    let out = silico(&["--config", "bad.toml", "crawl", "--outdir", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn replayed_pipeline_reviews_caches_and_forces() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    std::fs::write(
        dir.join("edits.jsonl"),
        r#"{"cluster":0,"field":"categories","value":"Human Mimicry","reviewer":"lead","rationale":"checked members","ts":"2026-02-01T10:00:00Z"}"#,
    )
    .unwrap();
    let out = pipeline(dir, "run", "3", &["--edits", "edits.jsonl", "--approver", "lead"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.join("run");

    let report = json(&run.join("review/final_report.json"));
    let findings = report["findings"].as_array().unwrap();
    assert_eq!(findings.len(), 3);
    assert_eq!(findings[0]["flagged"], Value::Bool(false));
    assert_eq!(findings[1]["flagged"], Value::Bool(true));
    assert_eq!(report["approved_by"], "lead");
    assert_eq!(report["edits"].as_array().unwrap().len(), 1);
    let md = std::fs::read_to_string(run.join("report/report.md")).unwrap();
    assert!(md.contains("| No. | Cluster | Theme | Sociological Insight | Category |"));
    let model = json(&run.join("cluster/model.json"));
    let manifest: silico_core::fixture::Manifest = silico_core::io::read_json(&dir.join("fx/manifest.json")).unwrap();
    let planted = manifest.theme_labels();
    let ids = model["record_ids"].as_array().unwrap();
    let want: Vec<usize> = ids.iter().map(|id| planted[id.as_str().unwrap()]).collect();
    let got: Vec<usize> = model["assignments"].as_array().unwrap().iter().map(|a| a.as_u64().unwrap() as usize).collect();
    let ari = silico_core::metrics::adjusted_rand_index(&got, &want);
    assert!(ari >= 0.95, "ARI {ari}");

    let stages = ["crawl", "preprocess", "embed", "cluster", "project", "ngrams", "render", "discover", "review", "report"];
    let before: Vec<String> =
        stages.iter().map(|s| std::fs::read_to_string(run.join(s).join("stage.json")).unwrap()).collect();
    let again = pipeline(dir, "run", "3", &["--edits", "edits.jsonl", "--approver", "lead"]);
    assert!(again.status.success());
    let log = String::from_utf8_lossy(&again.stderr);
    assert_eq!(log.matches("skipping").count(), stages.len(), "{log}");
    for (s, b) in stages.iter().zip(&before) {
        assert_eq!(&std::fs::read_to_string(run.join(s).join("stage.json")).unwrap(), b, "{s} reran");
    }

    let forced = silico(&["cluster", "--outdir", "run", "--seed", "3", "--k", "3", "--restarts", "4", "--force"], dir);
    assert!(forced.status.success());
    let record = json(&run.join("cluster/stage.json"));
    let old: Value = serde_json::from_str(&before[3]).unwrap();
    assert_ne!(record["finished_at"], old["finished_at"]);
    assert_eq!(record["fingerprint"], old["fingerprint"]);
    assert_eq!(json(&run.join("cluster/model.json")), model);
}

#[test]
fn same_seed_same_artifacts_in_fresh_outdirs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    for outdir in ["a", "b"] {
        let out = pipeline(dir, outdir, "9", &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["cluster/model.json", "cluster/centroids.bin", "project/projection.bin", "render/wordclouds.svg", "review/edits.jsonl"] {
        let a = std::fs::read(dir.join("a").join(file)).unwrap();
        let b = std::fs::read(dir.join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let a = json(&dir.join("a/embed/stage.json"));
    let b = json(&dir.join("b/embed/stage.json"));
    assert_eq!(a["fingerprint"], b["fingerprint"]);
    assert_eq!(a["master_seed"], 9);
}
