use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn xenovert(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xenovert"))
        .args(args)
        .env("XENOVERT_THREADS", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn short_univariate(out: &Path, seed: &str) -> Output {
    xenovert(
        &[
            "univariate",
            "--steps",
            "5000",
            "--seeds",
            "2",
            "--seed",
            seed,
            "--alpha",
            "1e-3",
            "--record-every",
            "500",
            "--out",
            out.to_str().unwrap(),
        ],
        "",
    )
}

#[test]
fn quantize_empty_input() {
    let o = xenovert(&["quantize"], "");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");
}

#[test]
fn quantize_reports_bad_line() {
    let o = xenovert(&["quantize"], "1\n2\nthree\n4\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn quantize_snapshot_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("tree.json");
    let values: Vec<String> = (0..400).map(|i| format!("{}", ((i * 37) % 101) as f64 / 7.0)).collect();
    let (head, tail) = values.split_at(250);
    let flags = ["--levels", "4", "--alpha", "1e-2"];

    let full = xenovert(&[&["quantize"][..], &flags].concat(), &(values.join("\n") + "\n"));
    assert!(full.status.success());

    let first = xenovert(
        &[&["quantize"][..], &flags, &["--snapshot-out", snap.to_str().unwrap()]].concat(),
        &(head.join("\n") + "\n"),
    );
    let second = xenovert(
        &["quantize", "--snapshot-in", snap.to_str().unwrap()],
        &(tail.join("\n") + "\n"),
    );
    assert!(first.status.success() && second.status.success());
    assert_eq!(stdout(&first) + &stdout(&second), stdout(&full));
}

#[test]
fn univariate_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(short_univariate(a.path(), "3").status.success());
    assert!(short_univariate(b.path(), "3").status.success());
    for name in ["trajectory_seed3.csv", "trajectory_seed4.csv", "summary.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let csv = std::fs::read_to_string(a.path().join("trajectory_seed3.csv")).unwrap();
    let mut lines = csv.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["seed"], 3);
    assert_eq!(lines.next(), Some("t,hi_score"));
    assert_eq!(lines.count(), 20);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_seeds"], 2);
    assert_eq!(summary["seeds"], serde_json::json!([3, 4]));
    assert!(summary["mean"].as_f64().unwrap() > 0.5);
}

#[test]
fn univariate_rejects_zero_steps() {
    let dir = tempfile::tempdir().unwrap();
    let o = xenovert(
        &["univariate", "--steps", "0", "--out", dir.path().to_str().unwrap()],
        "",
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(
        std::fs::read_dir(dir.path()).unwrap().next().is_none(),
        "no artifacts on validation failure"
    );
}

#[test]
fn univariate_rejects_bad_distribution() {
    let o = xenovert(&["univariate", "--dist-source", "cauchy:0,1"], "");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn covariate_requires_csv_for_external_datasets() {
    let o = xenovert(&["covariate", "--dataset", "abalone"], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("abalone"));
    let o = xenovert(&["covariate", "--dataset", "bogus"], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("iris, iris-noshift"), "{}", stderr(&o));
}

#[test]
fn covariate_single_seed_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = xenovert(
        &[
            "covariate",
            "--dataset",
            "iris",
            "--seeds",
            "1",
            "--epochs",
            "20",
            "--passes",
            "20",
            "--adapt-passes",
            "20",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        "",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["dataset"], "iris");
    assert_eq!(report["seeds"], serde_json::json!([0]));
    for arm in report["arms"].as_array().unwrap() {
        assert_eq!(arm["n_seeds"], 1);
        assert_eq!(arm["sd"], 0.0);
        assert_eq!(arm["metric"], "accuracy");
    }
    let csv = std::fs::read_to_string(dir.path().join("per_seed.csv")).unwrap();
    assert!(csv.starts_with("# {"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_xenovert"))
        .args(["quantize"])
        .env("XENOVERT_THREADS", "zero")
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
