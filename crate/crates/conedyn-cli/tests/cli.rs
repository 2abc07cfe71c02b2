//! End-to-end CLI checks: the exit-code contract, report files for both
//! formats, and byte-identical reruns.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conedyn"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn diagonal_config(analyses: &str, chi: f64) -> String {
    format!(
        r#"{{
  "dim": 2,
  "base": {{"kind": "bernoulli", "probabilities": [1.0]}},
  "generator": [[[2.0, 0.0], [0.0, 0.5]]],
  "orbit_length": 200,
  "seed": 5,
  "analyses": [{analyses}],
  "cone": {{
    "e_basis": [[1.0, 0.0]],
    "f_basis": [[0.0, 1.0]],
    "opening": 1.0,
    "chi": {chi}
  }},
  "output_format": "json"
}}"#
    )
}

#[test]
fn passing_verify_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ok.json", &diagonal_config("\"check:C1,C2,C3,C4\"", 2.0));
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn failing_verdict_exits_one() {
    // chi = 1.5 makes the separation bound 1/chi unreachable.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tight.json", &diagonal_config("\"check:C1,C2,C3,C4\"", 1.5));
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("C3: FAIL"), "{stdout}");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // Malformed JSON.
    let broken = write_config(dir.path(), "broken.json", "{ not json");
    let out = bin().args(["spectrum", "--config"]).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Semantic failure: negative orbit length is impossible in the schema,
    // use a non-square generator instead.
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{
  "dim": 2,
  "base": {"kind": "bernoulli", "probabilities": [1.0]},
  "generator": [[[2.0, 0.0]]],
  "orbit_length": 200,
  "seed": 5,
  "analyses": ["spectrum"]
}"#,
    );
    let out = bin().args(["spectrum", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("generator[0]"), "{stderr}");

    // Missing file.
    let out = bin()
        .args(["spectrum", "--config", "/nonexistent/x.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_three() {
    // Equal exponents: extraction has no splitting to converge to.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "degenerate.json",
        r#"{
  "dim": 2,
  "base": {"kind": "bernoulli", "probabilities": [1.0]},
  "generator": [[[2.0, 0.0], [0.0, 2.0]]],
  "orbit_length": 300,
  "seed": 5,
  "analyses": ["extract_splitting"]
}"#,
    );
    let out = bin()
        .args(["split", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spec.json",
        r#"{
  "dim": 2,
  "base": {"kind": "bernoulli", "probabilities": [0.5, 0.5]},
  "generator": [
    [[3.0, 0.0], [0.0, 0.3333333333333333]],
    [[2.0, 0.0], [0.0, 0.5]]
  ],
  "orbit_length": 2000,
  "seed": 7,
  "analyses": ["spectrum"]
}"#,
    );
    let run = |out_dir: &Path| {
        let out = bin()
            .args(["spectrum", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(out_dir.join("report.json")).unwrap()
    };
    let b1 = run(&dir.path().join("r1"));
    let b2 = run(&dir.path().join("r2"));
    assert_eq!(b1, b2);
}

#[test]
fn csv_format_writes_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ok.json", &diagonal_config("\"check:C1,C2,C3,C4\"", 2.0));
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path())
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for name in ["exponents.csv", "margins.csv", "verdicts.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.lines().next().unwrap().contains(','), "{name} header");
    }
    let verdicts = std::fs::read_to_string(dir.path().join("verdicts.csv")).unwrap();
    assert!(verdicts.contains("C3,true"), "{verdicts}");
}

#[test]
fn seed_override_changes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spec.json",
        r#"{
  "dim": 2,
  "base": {"kind": "bernoulli", "probabilities": [0.5, 0.5]},
  "generator": [
    [[3.0, 0.0], [0.0, 0.3333333333333333]],
    [[2.0, 0.0], [0.0, 0.5]]
  ],
  "orbit_length": 500,
  "seed": 7,
  "analyses": ["spectrum"]
}"#,
    );
    let run = |out_dir: &Path, seed: &str| {
        let out = bin()
            .args(["spectrum", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(out_dir)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(out_dir.join("report.json")).unwrap()
    };
    let b1 = run(&dir.path().join("a"), "1");
    let b2 = run(&dir.path().join("b"), "2");
    assert_ne!(b1, b2, "different seeds must change the report");
}

#[test]
fn unknown_tolerance_override_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ok.json", &diagonal_config("\"spectrum\"", 2.0));
    let out = bin()
        .args(["spectrum", "--config"])
        .arg(&cfg)
        .args(["--tolerance-overrides", "bogus=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bundled_scenarios_honor_the_exit_code_contract() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../examples_scenarios");
    let expectations = [
        ("bernoulli_diagonal.json", "spectrum", 0),
        ("diagonal_roundtrip.json", "verify", 0),
        ("periodic_verify.json", "verify", 0),
        ("equivalence_probe.json", "probe", 0),
        ("rotation_spectrum.json", "spectrum", 0),
        ("rotation_spectrum.json", "split", 0),
        ("diagonal_roundtrip.json", "cones", 0),
        ("diagonal_roundtrip.json", "roundtrip", 0),
        ("full_condition_sweep.json", "verify", 0),
    ];
    for (name, subcommand, expected) in expectations {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .args([subcommand, "--config"])
            .arg(corpus.join(name))
            .arg("--output")
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(expected),
            "{name}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
