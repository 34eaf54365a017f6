use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const ZERO_SALT: &str = "00000000000000000000000000000000";

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

fn pathharden(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathharden"))
        .args(args)
        .env_remove("PATHHARDEN_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    let doc: Value = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not one JSON document ({e}): {}", stdout(out)));
    assert_eq!(doc["format_version"], 1, "{doc}");
    doc
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_and_usage_errors() {
    let out = pathharden(&["--version"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "pathharden 0.1.0 (format version 1)");

    assert_eq!(code(&pathharden(&["obfuscate", "x.ml1"])), 2);
    assert_eq!(code(&pathharden(&["classify", "--frobnicate"])), 2);
    assert_eq!(code(&pathharden(&[])), 2);
}

#[test]
fn check_syntax_reports_parse_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ml1");
    fs::write(&bad, "input x: int;\nif (x == ) { reject; }\n").unwrap();
    let out = pathharden(&["check-syntax", path_str(&bad), "--json"]);
    assert_eq!(code(&out), 2);
    let doc = json(&out);
    assert_eq!(doc["ok"], false);
    assert_eq!(doc["error"]["kind"], "parse");
    assert_eq!(doc["error"]["details"][0]["span"]["line"], 2);
    assert!(stderr(&out).contains("bad.ml1:2:"), "{}", stderr(&out));

    let undeclared = dir.path().join("undeclared.ml1");
    fs::write(&undeclared, "if (y == 1) { reject; }\n").unwrap();
    let out = pathharden(&["check-syntax", path_str(&undeclared), "--json"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"]["details"][0]["code"], "undeclared_variable");

    let out = pathharden(&["check-syntax", path_str(&corpus("mixed_waf.ml1")), "--json"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert_eq!(doc["sites"], 4);
    assert_eq!(doc["inputs"][2]["type"], "int");

    let out = pathharden(&["check-syntax", "/nonexistent/file.ml1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn classify_json() {
    let out = pathharden(&["classify", path_str(&corpus("mixed_waf.ml1")), "--json"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    let kinds: Vec<&str> = doc["classifications"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["kind"].as_str().unwrap())
        .collect();
    assert_eq!(
        kinds,
        ["RangeCheck", "Unsupported", "SmallGuessingDomain", "SubstringMatch"]
    );

    let out = pathharden(&[
        "classify",
        path_str(&corpus("mixed_waf.ml1")),
        "--min-entropy-bits",
        "32",
        "--min-needle-len",
        "4",
        "--json",
    ]);
    assert_eq!(json(&out)["classifications"][2]["kind"], "PointEquality");

    let out = pathharden(&["classify", path_str(&corpus("php_filter.ml1")), "--min-entropy-bits", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn harden_with_pinned_salt_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let golden = fs::read_to_string(corpus("golden/php_filter.hardened.ml1")).unwrap();
    let golden_report: Value =
        serde_json::from_str(&fs::read_to_string(corpus("golden/php_filter.report.json")).unwrap())
            .unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_path = dir.path().join(format!("hardened{run}.ml1"));
        let report_path = dir.path().join(format!("report{run}.json"));
        let out = pathharden(&[
            "harden",
            path_str(&corpus("php_filter.ml1")),
            "-o",
            path_str(&out_path),
            "--salt",
            ZERO_SALT,
            "--report",
            path_str(&report_path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).is_empty());
        assert!(stderr(&out).contains("rule R3, window 16"));
        let text = fs::read(&out_path).unwrap();
        let report: Value = serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
        assert_eq!(report, golden_report);
        outputs.push(text);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], golden.as_bytes());
    assert!(!String::from_utf8_lossy(&outputs[0]).contains("2250738585072011"));
}

#[test]
fn harden_best_effort_matches_golden() {
    for name in ["mixed_waf", "blocked_accounts"] {
        let out = pathharden(&[
            "harden",
            path_str(&corpus(&format!("{name}.ml1"))),
            "--best-effort",
            "--salt",
            ZERO_SALT,
        ]);
        assert_eq!(code(&out), 0);
        let golden = fs::read_to_string(corpus(&format!("golden/{name}.hardened.ml1"))).unwrap();
        assert_eq!(stdout(&out), golden);
    }
}

#[test]
fn harden_strict_violation() {
    let out = pathharden(&["harden", path_str(&corpus("range_filter.ml1")), "--strict"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).is_empty());
    let err = stderr(&out);
    assert!(err.contains("RangeCheck") && err.contains("2:5"), "{err}");

    let out = pathharden(&["harden", path_str(&corpus("range_filter.ml1")), "--json"]);
    assert_eq!(code(&out), 1);
    let doc = json(&out);
    assert_eq!(doc["error"]["kind"], "strict_mode_violation");
    assert_eq!(doc["error"]["details"][0]["kind"], "RangeCheck");
    assert_eq!(doc["error"]["details"][0]["span"]["line"], 2);
}

#[test]
fn harden_salt_options() {
    let php = path_str(&corpus("php_filter.ml1")).to_string();
    let seeded = |seed: &str| stdout(&pathharden(&["harden", &php, "--seed", seed]));
    assert_eq!(seeded("7"), seeded("7"));
    assert_ne!(seeded("7"), seeded("8"));

    let out = pathharden(&["harden", &php, "--no-salt", "--truncate-bits", "64", "--json"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    let program = doc["program"].as_str().unwrap();
    assert!(program.contains("digest\"sha256/t64:"), "{program}");
    assert_eq!(doc["report"]["hash"]["truncate_bits"], 64);

    assert_eq!(code(&pathharden(&["harden", &php, "--salt", "xyz"])), 2);
    assert_eq!(code(&pathharden(&["harden", &php, "--truncate-bits", "7"])), 2);
    assert_eq!(code(&pathharden(&["harden", &php, "--salt", "00", "--no-salt"])), 2);
}

#[test]
fn run_reports_verdict_and_cost() {
    let php = path_str(&corpus("php_filter.ml1")).to_string();
    let out = pathharden(&["run", &php, "--input", "req=x=2.2250738585072011e-308", "--json"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert_eq!(doc["verdict"], "reject");
    assert_eq!(doc["cost"]["hash_invocations"], 0);

    let golden = path_str(&corpus("golden/php_filter.hardened.ml1")).to_string();
    let out = pathharden(&["run", &golden, "--input", "req=hello", "--json"]);
    assert_eq!(json(&out)["verdict"], "accept");
    let out = pathharden(&["run", &golden, "--input", r"req=\x002.2250738585072011e-308"]);
    assert_eq!(stdout(&out).trim(), "reject");

    assert_eq!(code(&pathharden(&["run", &php])), 2);
    assert_eq!(code(&pathharden(&["run", &php, "--input", "other=1"])), 2);
}

#[test]
fn check_finds_no_divergence_and_is_reproducible() {
    let (php, golden) = (corpus("php_filter.ml1"), corpus("golden/php_filter.hardened.ml1"));
    let args = [
        "check",
        path_str(&php),
        path_str(&golden),
        "--trials",
        "100000",
        "--seed",
        "42",
        "--json",
    ];
    let first = pathharden(&args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let doc = json(&first);
    assert_eq!(doc["trials"], 100_000);
    assert_eq!(doc["divergences"].as_array().unwrap().len(), 0);
    assert!(doc["rejects_p"].as_u64().unwrap() > 0);
    assert!(doc["cost_ratio"]["steps"]["median"].as_f64().unwrap() > 0.0);
    let second = pathharden(&args);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn check_reports_truncation_divergences() {
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("t8.ml1");
    let out = pathharden(&[
        "harden",
        path_str(&corpus("php_filter.ml1")),
        "--no-salt",
        "--truncate-bits",
        "8",
        "-o",
        path_str(&truncated),
    ]);
    assert_eq!(code(&out), 0);
    let out = pathharden(&[
        "check",
        path_str(&corpus("php_filter.ml1")),
        path_str(&truncated),
        "--trials",
        "2000",
        "--json",
    ]);
    assert_eq!(code(&out), 1);
    let doc = json(&out);
    assert!(doc["counts"]["accept_reject"].as_u64().unwrap() > 0);
    assert_eq!(doc["counts"]["reject_accept"], 0);
}

#[test]
fn check_rejects_mismatched_inputs() {
    let out = pathharden(&[
        "check",
        path_str(&corpus("php_filter.ml1")),
        path_str(&corpus("range_filter.ml1")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn attack_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("attack.json");
    let out = pathharden(&[
        "attack",
        path_str(&corpus("range_filter.ml1")),
        "--report",
        path_str(&report),
        "--json",
    ]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert_eq!(doc["consistency"], "PASS");
    let outcome = &doc["sites"][0]["outcomes"][0];
    assert_eq!(outcome["attacker"], "BinarySearch");
    assert_eq!(outcome["recovered"], 1000);
    let saved: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(saved, doc);

    let golden = path_str(&corpus("golden/php_filter.hardened.ml1")).to_string();
    let out = pathharden(&["attack", &golden, "--budget", "1000", "--plant", "2250738585072011"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("consistency: FAIL"));

    let out = pathharden(&["attack", &golden, "--budget", "1000"]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&pathharden(&["attack", &golden, "--budget", "0"])), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let file = path_str(&corpus("mixed_waf.ml1")).to_string();
    let flag = pathharden(&["attack", &file, "--budget", "500", "--seed", "99", "--json"]);
    let env = Command::new(env!("CARGO_BIN_EXE_pathharden"))
        .args(["attack", &file, "--budget", "500", "--json"])
        .env("PATHHARDEN_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
    assert_eq!(json(&flag)["seed"], 99);
    let other = pathharden(&["attack", &file, "--budget", "500", "--seed", "98", "--json"]);
    assert_ne!(flag.stdout, other.stdout);
}
