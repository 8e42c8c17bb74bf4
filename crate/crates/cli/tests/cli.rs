use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use tensorbel_cli::report::{CheckVerdict, QueryReport};

fn fixture(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("tests/fixtures");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn tensorbel(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tensorbel"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(bytes) = stdin {
        pipe.write_all(bytes).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn assert_failure(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn query_chain2_json() {
    let chain2 = fixture("chain2.json");
    let out = tensorbel(
        &[
            "query",
            "--network",
            &chain2,
            "--evidence",
            "B=b0",
            "--mode",
            "both",
            "--format",
            "json",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let report: QueryReport = serde_json::from_str(&text).unwrap();
    let update = &report.beliefs[0];
    assert_eq!(update.variables[0].var, "A");
    let a = &update.variables[0].values;
    assert!((a[0] - 0.54 / 0.62).abs() <= 1e-12);
    assert!((a[1] - 0.08 / 0.62).abs() <= 1e-12);
    let c = report.commitment.as_ref().unwrap();
    let states: Vec<_> = c
        .assignment
        .iter()
        .map(|s| (s.var.as_str(), s.state.as_str()))
        .collect();
    assert_eq!(states, [("A", "a0"), ("B", "b0")]);
    assert!((c.score - 0.54).abs() <= 1e-12);
    assert!(report.emissions <= 4);
    // Parse and re-emit reproduces the bytes.
    assert_eq!(tensorbel_cli::report::to_json(&report), text);
}

#[test]
fn query_without_evidence_gives_priors() {
    let out = tensorbel(
        &[
            "query",
            "--network",
            &fixture("chain2.json"),
            "--mode",
            "update",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("A: a0=0.600000 a1=0.400000"), "{text}");
    assert!(text.contains("B: b0=0.620000 b1=0.380000"), "{text}");
    assert!(!text.contains("commitment"));
}

#[test]
fn loopy_network_is_rejected() {
    let out = tensorbel(&["query", "--network", &fixture("loopy.json")], None);
    assert_failure(&out, 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("undirected cycle"), "{err}");
}

#[test]
fn check_chain2_passes() {
    let out = tensorbel(
        &[
            "check",
            "--network",
            &fixture("chain2.json"),
            "--format",
            "json",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let verdict: CheckVerdict = serde_json::from_slice(&out.stdout).unwrap();
    assert!(verdict.passed);
}

#[test]
fn random_networks_pass_check() {
    for seed in 0..100u64 {
        let s = seed.to_string();
        let doc = tensorbel(&["random", "--seed", &s, "--nodes", "8"], None);
        assert_eq!(doc.status.code(), Some(0));
        let out = tensorbel(&["check", "--network", "-"], Some(&doc.stdout));
        assert_eq!(
            out.status.code(),
            Some(0),
            "seed {seed}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn random_is_deterministic_and_queryable() {
    let a = tensorbel(&["random", "--seed", "7", "--nodes", "5"], None);
    let b = tensorbel(&["random", "--seed", "7", "--nodes", "5"], None);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let q = tensorbel(&["query", "--network", "-"], Some(&a.stdout));
    assert_eq!(q.status.code(), Some(0));
}

#[test]
fn random_rejects_zero_nodes() {
    assert_failure(
        &tensorbel(&["random", "--seed", "1", "--nodes", "0"], None),
        1,
    );
}

#[test]
fn oversized_network_hits_the_cap() {
    let doc = tensorbel(&["random", "--seed", "3", "--nodes", "30"], None);
    let out = tensorbel(&["check", "--network", "-"], Some(&doc.stdout));
    assert_failure(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}

#[test]
fn usage_errors() {
    let chain2 = fixture("chain2.json");
    assert_failure(
        &tensorbel(&["query", "--network", &chain2, "--bogus"], None),
        1,
    );
    assert_failure(&tensorbel(&["query"], None), 1);
    assert_failure(
        &tensorbel(
            &[
                "query",
                "--network",
                &chain2,
                "--evidence",
                "B=b0",
                "--evidence-file",
                &chain2,
            ],
            None,
        ),
        1,
    );
    assert_failure(
        &tensorbel(&["query", "--network", &chain2, "--evidence", "B"], None),
        1,
    );
    assert_failure(
        &tensorbel(&["query", "--network", &chain2, "--mode", "sideways"], None),
        1,
    );
}

#[test]
fn evidence_errors() {
    let chain2 = fixture("chain2.json");
    assert_failure(
        &tensorbel(&["query", "--network", &chain2, "--evidence", "B=b9"], None),
        3,
    );
    assert_failure(
        &tensorbel(&["query", "--network", &chain2, "--evidence", "Z=z0"], None),
        3,
    );
    assert_failure(
        &tensorbel(
            &["query", "--network", &chain2, "--likelihood", "B:1"],
            None,
        ),
        3,
    );
    assert_failure(
        &tensorbel(
            &["query", "--network", &chain2, "--likelihood", "B:0,0"],
            None,
        ),
        3,
    );
}

#[test]
fn evidence_file_and_soft_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.json");
    std::fs::write(&path, r#"{"hard": {"B": "b0"}}"#).unwrap();
    let chain2 = fixture("chain2.json");
    let from_file = tensorbel(
        &[
            "query",
            "--network",
            &chain2,
            "--evidence-file",
            path.to_str().unwrap(),
        ],
        None,
    );
    let inline = tensorbel(&["query", "--network", &chain2, "--evidence", "B=b0"], None);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, inline.stdout);

    let soft = tensorbel(
        &[
            "query",
            "--network",
            &chain2,
            "--likelihood",
            "B:0.9,0.4",
            "--check",
        ],
        None,
    );
    assert_eq!(
        soft.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&soft.stderr)
    );
    assert!(String::from_utf8_lossy(&soft.stdout).contains("oracle check: passed"));
}

#[test]
fn contradictory_evidence_is_zero_mass() {
    let det = fixture("deterministic.json");
    let out = tensorbel(
        &[
            "query",
            "--network",
            &det,
            "--evidence",
            "A=a0",
            "--evidence",
            "B=b1",
        ],
        None,
    );
    assert_failure(&out, 4);
    let check = tensorbel(
        &[
            "check",
            "--network",
            &det,
            "--evidence",
            "A=a0",
            "--evidence",
            "B=b1",
        ],
        None,
    );
    assert_failure(&check, 4);
}

#[test]
fn trace_writes_one_line_per_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    let out = tensorbel(
        &[
            "query",
            "--network",
            &fixture("chain2.json"),
            "--trace",
            path.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["kind"], "pi");
    assert_eq!(lines[3]["mode"], "revise");
}

#[test]
fn help_and_version_succeed() {
    let help = tensorbel(&["--help"], None);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("query"));
    assert_eq!(tensorbel(&["--version"], None).status.code(), Some(0));
}
