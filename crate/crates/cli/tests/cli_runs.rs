use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pf_pipeline::evalstat::EvalReport;

const STAGE_ORDER: [&str; 9] = [
    "ingest",
    "preprocess",
    "gan-train",
    "gan-sample",
    "sieve",
    "train",
    "protocol",
    "eval",
    "report",
];

/// A config small enough for the full chain to run in seconds.
const FAST_CONFIG: &str = "\
seed = 5
gan.max_epochs = 2
gan.sample_count = 8
cesp.folds = 2
cesp.epochs = 2
";

fn pf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pf"))
        .args(args)
        .output()
        .expect("failed to spawn pf binary")
}

fn run_stage(stage: &str, config: &Path, out: &Path) {
    let out_str = out.to_str().unwrap();
    let cfg_str = config.to_str().unwrap();
    let result = pf(&[stage, "--toy", "--config", cfg_str, "--out", out_str]);
    assert!(
        result.status.success(),
        "stage {stage} failed:\n{}",
        String::from_utf8_lossy(&result.stderr)
    );
}

fn collect_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, into);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                into.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut map = BTreeMap::new();
    walk(root, root, &mut map);
    map
}

#[test]
fn unknown_stage_exits_with_code_two_and_usage() {
    let result = pf(&["bogus"]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("unknown stage"), "stderr: {stderr}");
    assert!(stderr.contains("usage"), "stderr: {stderr}");

    let bare = pf(&[]);
    assert_eq!(bare.status.code(), Some(2));
}

#[test]
fn invalid_config_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pf.conf");
    fs::write(&config, "sieve.nu = 1.5\n").unwrap();
    let result = pf(&["ingest", "--toy", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("sieve.nu"), "stderr: {stderr}");
}

#[test]
fn toy_chain_produces_expected_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pf.conf");
    fs::write(&config, FAST_CONFIG).unwrap();

    let run_a = dir.path().join("run-a");
    let run_b = dir.path().join("run-b");
    for out in [&run_a, &run_b] {
        for stage in STAGE_ORDER {
            run_stage(stage, &config, out);
        }
    }

    // Every combination of train/test corpus gets a pooled report with the
    // shared CSV header, plus the raw per-window predictions next to it.
    for tag in ["trtr", "tstr", "trts", "tsts"] {
        let report = run_a.join("protocol").join(format!("{tag}_report.csv"));
        let text = fs::read_to_string(&report)
            .unwrap_or_else(|e| panic!("missing {}: {e}", report.display()));
        assert!(text.starts_with(EvalReport::CSV_HEADER), "bad header in {}", report.display());
        assert_eq!(text.lines().count(), 2, "expected one pooled row in {}", report.display());
        assert!(run_a.join("protocol").join(format!("{tag}_records.csv")).exists());
        assert!(run_a.join("eval").join(format!("{tag}_report.csv")).exists());
    }

    let summary = fs::read_to_string(run_a.join("report").join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5, "header plus one row per combination:\n{summary}");
    assert!(run_a.join("report").join("significance.csv").exists());
    assert!(run_a.join("eval").join("roc").join("roc.svg").exists());

    // Same seed, same config: the two output trees must match byte for byte.
    let tree_a = collect_tree(&run_a);
    let tree_b = collect_tree(&run_b);
    assert_eq!(
        tree_a.keys().collect::<Vec<_>>(),
        tree_b.keys().collect::<Vec<_>>(),
        "runs produced different file sets"
    );
    for (path, bytes) in &tree_a {
        assert_eq!(bytes, &tree_b[path], "{} differs between reruns", path.display());
    }
}
