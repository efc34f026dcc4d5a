use std::path::Path;
use std::process::{Command, Output};

fn persona(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persona"))
        .args(args)
        .env_remove("NETRA_SEED")
        .output()
        .expect("spawn persona")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const COHORT: &str = r#"{
  "n": 120, "d_numeric": 8, "d_categorical": 1, "seed": 4,
  "planted": [{"conditions": [{"feature": "f1", "op": "gt", "value": 0.0},
                              {"feature": "f5", "op": "lt", "value": 0.5}],
               "q_in": 0.9}],
  "q_out": 0.3
}"#;

const ARMS: &str = r#"{
  "n": 160, "d_numeric": 5, "seed": 2,
  "arm_effect": {"signature": [{"feature": "f0", "weight": 1.0},
                               {"feature": "f1", "weight": -1.0},
                               {"feature": "f2", "weight": 0.5}],
                 "noise_sd": 0.3}
}"#;

fn generate(dir: &Path, name: &str, spec: &str) -> std::path::PathBuf {
    let spec_path = dir.join(format!("{name}.json"));
    std::fs::write(&spec_path, spec).unwrap();
    let out = dir.join(name);
    let o = persona(&["generate", "--spec", s(&spec_path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a", COHORT);
    let b = generate(dir.path(), "b", COHORT);
    for f in ["data.csv", "ground_truth.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let truth: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["planted"][0]["variables"], serde_json::json!(["f1", "f5"]));
}

#[test]
fn analyze_twice_then_rerender() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "cohort", COHORT).join("data.csv");
    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = persona(&[
            "analyze", "--data", s(&data), "--outcome", "outcome", "--id-column", "id",
            "--seed", "7", "--set", "evolve.generations=3", "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["persona_report.json", "report.txt", "tokens.txt", "audit.log"] {
            assert!(out.join(f).exists(), "{f}");
        }
        reports.push(std::fs::read(out.join("persona_report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let json = dir.path().join("r1/persona_report.json");
    let rendered = dir.path().join("again.txt");
    let o = persona(&["report", "--input", s(&json), "--out", s(&rendered)]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_to_string(rendered).unwrap(),
        std::fs::read_to_string(dir.path().join("r1/report.txt")).unwrap()
    );
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "cohort", COHORT).join("data.csv");
    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_persona"))
        .args(["analyze", "--data", s(&data), "--outcome", "outcome", "--set", "evolve.generations=2", "--out", s(&out)])
        .env("NETRA_SEED", "11")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("persona_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 11);
}

#[test]
fn benefit_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "arms", ARMS).join("data.csv");
    let out = dir.path().join("benefit");
    let o = persona(&[
        "benefit", "--data", s(&data), "--response-column", "response", "--id-column", "id",
        "--features", "f0,f1,f2", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("matched pairs:"));
    assert!(stdout.contains("C-for-benefit:"));
    let pairs = std::fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert!(pairs.starts_with("patient_a,patient_b,distance,predicted_benefit,observed_benefit"));
}

#[test]
fn usage_and_input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "cohort", COHORT).join("data.csv");
    let out = dir.path().join("x");
    let cases: Vec<Vec<&str>> = vec![
        vec!["analyze", "--outcome", "outcome"],
        vec!["analyze", "--bogus"],
        vec!["frobnicate"],
        vec!["analyze", "--data", "/nonexistent.csv", "--outcome", "outcome", "--out", s(&out)],
        vec!["analyze", "--data", s(&data), "--outcome", "missing", "--out", s(&out)],
        vec!["analyze", "--data", s(&data), "--outcome", "outcome", "--set", "engine.nope=1", "--out", s(&out)],
        vec!["analyze", "--data", s(&data), "--outcome", "outcome", "--set", "engine.step_rate=fast", "--out", s(&out)],
        vec!["benefit", "--data", s(&data), "--features", "f0"],
    ];
    for args in cases {
        let o = persona(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(persona(&["--help"]).status.code(), Some(0));
}
