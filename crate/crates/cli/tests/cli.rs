use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::{Retrieve, Uri, Validator};
use serde_json::Value;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn data(name: &str) -> String {
    crate_dir().join("data").join(name).display().to_string()
}

struct SchemaDir;

impl Retrieve for SchemaDir {
    fn retrieve(&self, uri: &Uri<String>) -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
        let name = uri.path().as_str().rsplit('/').next().unwrap_or_default().to_string();
        Ok(load(&crate_dir().join("schemas").join(name)))
    }
}

fn load(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> Validator {
    let s = load(&crate_dir().join("schemas").join(name));
    jsonschema::options()
        .with_base_uri("file:///schemas/")
        .with_retriever(SchemaDir)
        .build(&s)
        .unwrap()
}

fn qrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrlab"))
        .args(args)
        .env("QRLAB_THREADS", "1")
        .output()
        .unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = qrlab(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let errors: Vec<String> = schema("report.schema.json").iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    v
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn data_files_match_their_schemas() {
    let cases = [
        ("operator.schema.json", &["sz.json", "sx.json", "sy.json", "p0.json", "mixed.json", "zero.json", "plus.json"][..]),
        ("condition.schema.json", &["ball.json", "near_zero.json", "u_zero.json"]),
        ("poset.schema.json", &["chain3.json", "basis.json"]),
        ("qr.schema.json", &["sz_squared.json"]),
    ];
    for (name, files) in cases {
        let v = schema(name);
        for f in files {
            let doc = load(Path::new(&data(f)));
            assert!(v.is_valid(&doc), "{f} against {name}");
        }
    }
}

#[test]
fn schemas_reject_malformed_documents() {
    let op = schema("operator.schema.json");
    assert!(!op.is_valid(&serde_json::json!({"dim": 2, "re": [[1]]})));
    assert!(!op.is_valid(&serde_json::json!({"dim": 1, "re": [[1]], "im": [[0]], "extra": 1})));
    let cond = schema("condition.schema.json");
    let center = load(Path::new(&data("mixed.json")));
    assert!(!cond.is_valid(&serde_json::json!({"balls": [{"center": center, "radius": 0}]})));
    let qr = schema("qr.schema.json");
    assert!(!qr.is_valid(&serde_json::json!({"extent": "ball.json", "expr": {"add": [{"constant": 1}]}})));
    assert!(!qr.is_valid(&serde_json::json!({"extent": "ball.json", "expr": {"constant": 1, "linear": "sz.json"}})));
}

#[test]
fn range_of_sz_on_the_mixed_ball() {
    let v = report(&["range", "--op", &data("sz.json"), "--condition", &data("ball.json"), "--samples", "100000", "--seed", "42"]);
    let r = &v["results"];
    assert!((r["lo"].as_f64().unwrap() + 0.2).abs() <= 0.01);
    assert!((r["hi"].as_f64().unwrap() - 0.2).abs() <= 0.01);
    assert!(r["rigor"].is_string());
    assert_eq!(v["command"], "range");
    assert_eq!(v["parameters"]["sampling"]["seed"], 42);
    assert_eq!(v["inputs"]["op"]["content"], load(Path::new(&data("sz.json"))));
}

#[test]
fn bell_with_parallel_settings() {
    let v = report(&["bell", "--uL", "0", "0", "1", "--uR", "0", "0", "1", "--eps", "0.01", "--pairs", "1000", "--seed", "7"]);
    let r = &v["results"];
    assert!((r["mean"].as_f64().unwrap() + 1.0).abs() <= 0.011, "{}", r["mean"]);
    assert_eq!(r["pass"], true);
}

#[test]
fn lem_fails_on_the_three_chain() {
    let v = report(&["logic", "--poset", &data("chain3.json"), "--check", "lem"]);
    assert_eq!(v["results"], serde_json::json!({"lem_holds": false, "witness": "U={b1}"}));
}

#[test]
fn every_command_reports_against_the_schema() {
    let (sz, sx, sy, ball) = (data("sz.json"), data("sx.json"), data("sy.json"), data("ball.json"));
    let (square, mixed, near, basis) = (data("sz_squared.json"), data("mixed.json"), data("near_zero.json"), data("basis.json"));
    let (p0, plus) = (data("p0.json"), data("plus.json"));
    let runs: Vec<Vec<&str>> = vec![
        vec!["eval", "--qr", &square, "--state", &mixed],
        vec!["collimate", "--op", &sz, "--interval", "0.8", "1.2", "--eps", "0.5", "--condition", &near, "--strict", "--samples", "50", "--seed", "1"],
        vec!["locate", "--op", &sz, "--interval", "0.8", "1.2", "--poset", &basis],
        vec!["heisenberg", "--op-a", &sx, "--op-b", &sy, "--interval-a", "-1.5", "1.5", "--interval-b", "-1.5", "1.5", "--eps", "0.5", "--condition", &ball, "--samples", "50", "--seed", "1"],
        vec!["logic", "--poset", &basis, "--check", "laws"],
        vec!["dynamics", "--model", "harmonic", "--dim", "30", "--t-end", "0.5", "--samples", "2", "--seed", "1"],
        vec!["chsh", "--eps", "0.01", "--pairs", "100", "--seed", "3"],
        vec!["dichotomic", "--projection", &p0, "--state", &plus, "--runs", "500", "--eps", "0.01", "--seed", "5"],
        vec!["slit", "--dim", "60", "--samples", "2", "--seed", "1"],
    ];
    for args in &runs {
        let v = report(args);
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let strip = |o: Output| -> String {
        String::from_utf8(o.stdout).unwrap().lines().filter(|l| !l.contains("wall_clock_seconds")).collect::<Vec<_>>().join("\n")
    };
    let args = ["range", "--qr", &data("sz_squared.json"), "--samples", "300", "--seed", "11"];
    assert_eq!(strip(qrlab(&args)), strip(qrlab(&args)));
    let bell = ["bell", "--uL", "1", "0", "0", "--uR", "0", "0", "1", "--eps", "0.02", "--pairs", "200", "--seed", "9"];
    assert_eq!(strip(qrlab(&bell)), strip(qrlab(&bell)));
    let mut other = bell;
    other[14] = "10";
    assert_ne!(strip(qrlab(&bell)), strip(qrlab(&other)));
}

#[test]
fn dynamics_csv_has_the_documented_columns() {
    let out = qrlab(&["dynamics", "--model", "free", "--dim", "30", "--t-end", "0.1", "--steps", "10", "--samples", "2", "--seed", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sample_id,t,q_hamilton,p_hamilton,q_heisenberg,p_heisenberg"));
    assert_eq!(lines.count(), 2 * 11);
}

#[test]
fn output_flag_writes_the_report_to_a_file() {
    let path = std::env::temp_dir().join(format!("qrlab-report-{}.json", std::process::id()));
    let out = qrlab(&["logic", "--poset", &data("chain3.json"), "--check", "dne", "--output", &path.display().to_string()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v = load(&path);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(v["results"]["double_negation_holds"], false);
}

#[test]
fn validation_errors_exit_with_two() {
    let out = qrlab(&["range", "--op", &data("bad.json"), "--condition", &data("ball.json"), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.json:3:"), "{}", stderr(&out));

    let out = qrlab(&["range", "--op", &data("nonhermitian.json"), "--condition", &data("ball.json"), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Hermitian"));

    let missing_seed = qrlab(&["range", "--op", &data("sz.json"), "--condition", &data("ball.json")]);
    assert_eq!(missing_seed.status.code(), Some(2));
    let zero_samples = qrlab(&["range", "--op", &data("sz.json"), "--condition", &data("ball.json"), "--seed", "1", "--samples", "0"]);
    assert_eq!(zero_samples.status.code(), Some(2));
    assert_eq!(qrlab(&["frobnicate"]).status.code(), Some(2));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_qrlab"))
        .args(["logic", "--poset", &data("chain3.json"), "--check", "lem"])
        .env("QRLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn failed_property_check_exits_with_three() {
    let args = |k: &'static str| {
        vec![
            "lueders".to_string(), "--op-a".into(), data("sz.json"), "--interval-a".into(), "0.8".into(), "1.2".into(),
            "--op-b".into(), data("sx.json"), "--state".into(), data("zero.json"), "--delta".into(), "0.02".into(),
            "--condition".into(), data("u_zero.json"), "--eps".into(), "0.05".into(), "--k".into(), k.into(),
            "--samples".into(), "50".into(), "--seed".into(), "1".into(),
        ]
    };
    let run = |k| {
        let a = args(k);
        qrlab(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let ok = run("1");
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let tight = run("0.001");
    assert_eq!(tight.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&tight.stdout).unwrap();
    assert_eq!(v["results"]["pass"], false);
}

#[test]
fn numeric_failure_exits_with_four() {
    let path = std::env::temp_dir().join(format!("qrlab-huge-{}.json", std::process::id()));
    std::fs::write(&path, r#"{"dim": 2, "re": [[1e308, 1e308], [1e308, -1e308]], "im": [[0, 0], [0, 0]]}"#).unwrap();
    let out = qrlab(&["range", "--op", &path.display().to_string(), "--condition", &data("ball.json"), "--seed", "1"]);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}
