//! The `figqa` binary: exit codes and the files each command writes.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use figqa::core::Strategy;
use figqa::io::save_dataset;

fn figqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_figqa"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Writes the scripted scenario into `dir` and returns the backend flag.
fn scenario_files(dir: &Path) -> String {
    let s = common::scenario();
    save_dataset(&s.dataset, &dir.join("dataset.jsonl")).unwrap();
    std::fs::write(dir.join("fixture.json"), s.fixture.to_json()).unwrap();
    format!("scripted:{}", dir.join("fixture.json").display())
}

fn run_strategy(dir: &Path, backend: &str, strategy: &str) -> Output {
    figqa(
        dir,
        &[
            "run",
            "--strategy",
            strategy,
            "--dataset",
            "dataset.jsonl",
            "--backend",
            backend,
            "--model",
            "scripted",
            "--out",
            strategy,
        ],
    )
}

#[test]
fn help_version_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&figqa(dir.path(), &["--help"])), 0);
    assert_eq!(code(&figqa(dir.path(), &["--version"])), 0);
    assert_eq!(code(&figqa(dir.path(), &["run", "--help"])), 0);
    assert_eq!(code(&figqa(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&figqa(dir.path(), &["run", "--jobs", "many"])), 1);
    assert_eq!(code(&figqa(dir.path(), &[])), 1);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = figqa(dir.path(), &["selftest"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(
        stdout(&out)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count(),
        4
    );
}

#[test]
fn scripted_runs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scenario_files(dir.path());
    for s in Strategy::ALL {
        let out = run_strategy(dir.path(), &backend, s.as_str());
        assert_eq!(code(&out), 0, "{}: {}", s.as_str(), stderr(&out));
        assert_eq!(stdout(&out).trim(), s.as_str());
        assert!(dir.path().join(s.as_str()).join("manifest.json").is_file());
    }
    // the response cache defaults to ./cache
    assert!(dir.path().join("cache").is_dir());

    let out = figqa(
        dir.path(),
        &[
            "report",
            "--dataset",
            "dataset.jsonl",
            "--runs",
            "direct_few,simplify_then_answer",
            "--format",
            "csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    let row = csv
        .lines()
        .find(|l| l.starts_with("direct_few,yelp_fig,"))
        .unwrap_or_else(|| panic!("{csv}"));
    assert!(row.contains(",0.6,"), "{row}");
    assert!(row.ends_with(",true"), "{row}");

    let out = figqa(
        dir.path(),
        &[
            "report",
            "--dataset",
            "dataset.jsonl",
            "--runs",
            "direct_few,simplify_then_answer",
            "--out",
            "table.txt",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = std::fs::read_to_string(dir.path().join("table.txt")).unwrap();
    let row = |name: &str| {
        table
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap()
            .to_string()
    };
    assert!(row("direct_few ").contains('*'), "{table}");
    assert!(row("simplify_then_answer").contains('^'), "{table}");
}

#[test]
fn scripted_backend_needs_no_model_name() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scenario_files(dir.path());
    let out = figqa(
        dir.path(),
        &["run", "--strategy", "cot", "--dataset", "dataset.jsonl", "--backend", &backend],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run_dir = stdout(&out).trim().to_string();
    assert!(run_dir.starts_with("runs/"), "{run_dir}");
    assert!(dir.path().join(&run_dir).join("manifest.json").is_file());
}

#[test]
fn identical_runs_report_equal_cells() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scenario_files(dir.path());
    for name in ["A", "B"] {
        let out = figqa(
            dir.path(),
            &["run", "--strategy", "direct_few", "--dataset", "dataset.jsonl", "--backend", &backend, "--out", name],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let out = figqa(dir.path(), &["report", "--dataset", "dataset.jsonl", "--runs", "A,B"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let cells = |name: &str| -> Vec<String> {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().skip(1).map(|c| c.trim_end_matches(['^', '*']).to_string()).collect()
    };
    assert_eq!(cells("A "), cells("B "), "{text}");
    assert!(!text.lines().any(|l| l.starts_with("B ") && l.contains('*')), "{text}");
}

#[test]
fn config_file_supplies_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scenario_files(dir.path());
    let config = format!(
        "[answerer]\nendpoint_url = \"{backend}\"\nmodel_name = \"scripted\"\n\n[run]\nstrategy = \"direct_zero\"\njobs = 2\ncache_dir = \"c\"\n"
    );
    std::fs::write(dir.path().join("figqa.toml"), config).unwrap();
    let out = figqa(
        dir.path(),
        &[
            "run",
            "--config",
            "figqa.toml",
            "--dataset",
            "dataset.jsonl",
            "--out",
            "r",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("c").is_dir());
    let manifest = std::fs::read_to_string(dir.path().join("r/manifest.json")).unwrap();
    assert!(manifest.contains("direct_zero"));
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scenario_files(dir.path());
    let out = figqa(
        dir.path(),
        &[
            "run",
            "--dataset",
            "dataset.jsonl",
            "--backend",
            &backend,
            "--model",
            "m",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("run.strategy"), "{}", stderr(&out));
    let out = figqa(
        dir.path(),
        &[
            "run",
            "--strategy",
            "direct_few",
            "--dataset",
            "dataset.jsonl",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("answerer.endpoint_url"),
        "{}",
        stderr(&out)
    );
    let out = run_strategy(dir.path(), &backend, "guess");
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown strategy"));
    let out = figqa(dir.path(), &["ingest", "missing.jsonl"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn failed_calls_give_a_partial_run() {
    let dir = tempfile::tempdir().unwrap();
    scenario_files(dir.path());
    std::fs::write(dir.path().join("empty.json"), "{}").unwrap();
    let backend = format!("scripted:{}", dir.path().join("empty.json").display());
    let out = run_strategy(dir.path(), &backend, "direct_few");
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("20 of 20 instances failed"),
        "{}",
        stderr(&out)
    );
    // partial runs are still persisted
    assert!(dir.path().join("direct_few/predictions.jsonl").is_file());

    // an absent API key is a per-call failure, and the key name is reported
    let out = figqa(
        dir.path(),
        &[
            "run",
            "--strategy",
            "direct_zero",
            "--dataset",
            "dataset.jsonl",
            "--backend",
            "http://127.0.0.1:9/v1",
            "--model",
            "m",
            "--api-key-env",
            "FIGQA_TEST_UNSET_KEY",
            "--out",
            "nokey",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("FIGQA_TEST_UNSET_KEY"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn ingest_csv_writes_canonical_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("qa.csv"),
        "id,source,split,context,question,gold_answer,manual_literal_context,figurativeness_scores\n\
         a1,Amazon,figurative,The case is a tank.,Is the case sturdy?,Yes,The case is sturdy.,4;4;3\n\
         a2,amazon,non_figurative,The case cracked.,Is the case sturdy?,no,,1;1\n",
    )
    .unwrap();
    let out = figqa(dir.path(), &["ingest", "qa.csv", "--out", "qa.jsonl"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("amazon   figurative          1     0      1"),
        "{}",
        stdout(&out)
    );
    let text = std::fs::read_to_string(dir.path().join("qa.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"figurativeness_scores\":[4,4,3]"));
}

#[test]
fn extract_then_synth() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("reviews.csv"),
        "review_id,text\nr1,\"The pizza was as big as a wheel. Service was fine.\"\nr2,\"Nothing to see here.\"\n",
    )
    .unwrap();
    let out = figqa(
        dir.path(),
        &[
            "extract",
            "reviews.csv",
            "--id-column",
            "review_id",
            "--out",
            "cands.jsonl",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cands = std::fs::read_to_string(dir.path().join("cands.jsonl")).unwrap();
    assert_eq!(cands.lines().count(), 1, "{cands}");
    assert!(cands.contains("\"origin\":\"r1\""));

    let (candidates, fixture) = common::synthetic_candidates();
    figqa::io::write_jsonl(&dir.path().join("synth_in.jsonl"), &candidates).unwrap();
    std::fs::write(dir.path().join("gen.json"), fixture.to_json()).unwrap();
    let backend = format!("scripted:{}", dir.path().join("gen.json").display());
    let out = figqa(
        dir.path(),
        &[
            "synth",
            "--candidates",
            "synth_in.jsonl",
            "--out-dir",
            "out",
            "--backend",
            &backend,
            "--model",
            "g",
        ],
    );
    // malformed outputs are dropped, not failures
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "yes 5 no 3 total 8 dropped 2");
    let read = |name: &str| std::fs::read_to_string(dir.path().join("out").join(name)).unwrap();
    assert_eq!(read("synthetic.jsonl").lines().count(), 8);
    assert_eq!(read("dropped.jsonl").lines().count(), 2);
    assert_eq!(read("finetune.jsonl").lines().count(), 8);
}

#[test]
fn agree_merges_scores() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [
        ("a", "x", "4"),
        ("b", "x", "3"),
        ("a", "y", "1"),
        ("b", "y", "2"),
    ];
    let export: String = lines
        .iter()
        .map(|(who, item, v)| {
            format!(
                "{{\"batch_id\":\"f\",\"task_id\":\"f/{item}\",\"item_id\":\"{item}\",\"kind\":\"figurativeness_1to4\",\"annotator_id\":\"{who}\",\"value\":\"{v}\",\"timestamp\":0,\"payload\":{{\"context\":\"c\"}}}}\n"
            )
        })
        .collect();
    std::fs::write(dir.path().join("export.jsonl"), export).unwrap();
    let dataset = common::bins_dataset();
    let keep: Vec<_> = dataset
        .instances()
        .iter()
        .take(2)
        .cloned()
        .map(|mut i| {
            i.id = if i.id == "b-1" {
                "x".into()
            } else {
                "y".into()
            };
            i.figurativeness = None;
            i
        })
        .collect();
    save_dataset(
        &figqa::core::Dataset::new(keep).unwrap(),
        &dir.path().join("d.jsonl"),
    )
    .unwrap();
    let out = figqa(
        dir.path(),
        &[
            "agree",
            "export.jsonl",
            "--dataset",
            "d.jsonl",
            "--out",
            "scored.jsonl",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["pairs"][0]["n_overlap"], 2);
    let scored = std::fs::read_to_string(dir.path().join("scored.jsonl")).unwrap();
    assert!(
        scored.contains("\"figurativeness_scores\":[4,3]"),
        "{scored}"
    );
    assert!(
        scored.contains("\"figurativeness_scores\":[1,2]"),
        "{scored}"
    );
}
