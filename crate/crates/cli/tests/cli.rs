use std::process::Command;

fn pillai(args: &[&str]) -> (i32, String, String) {
    pillai_env(args, &[])
}

fn pillai_env(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pillai"))
        .args(args)
        .envs(env.iter().copied())
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn fib_values() {
    assert_eq!(pillai(&["fib", "--k", "2", "--n", "10"]).1.trim(), "55");
    assert_eq!(pillai(&["fib", "--k", "4", "--n", "8"]).1.trim(), "56");
    assert_eq!(pillai(&["fib", "--k", "3", "--n", "-1"]).1.trim(), "0");
}

#[test]
fn root_encloses_golden_ratio() {
    let (code, out, _) = pillai(&["root", "--k", "2", "--digits", "12"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "[1.618033988749, 1.618033988750]");
}

#[test]
fn cf_of_log_ratio() {
    let (code, out, _) = pillai(&["cf", "--expr", "log(3)/log(2)", "--to-index", "8", "--digits", "40"]);
    assert_eq!(code, 0);
    let a: Vec<String> = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["a"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(a, ["1", "1", "1", "2", "2", "3", "1", "5", "2"]);
}

#[test]
fn cf_of_rational_terminates() {
    let (code, out, err) = pillai(&["cf", "--expr", "5/4", "--to-index", "10", "--digits", "20"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 2);
    assert!(err.contains("terminates"));
}

#[test]
fn cf_reports_precision_cap() {
    // 7/3 is never exact in binary, so the quotient after [2; 3] stays uncertified.
    let (code, out, err) = pillai_env(
        &["cf", "--expr", "7/3", "--to-index", "5", "--digits", "20"],
        &[("PILLAI_PRECISION_CAP", "1024")],
    );
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("1024-bit cap"), "{err}");
}

#[test]
fn bounds_json() {
    let (code, out, _) = pillai(&["bounds", "--k", "10"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["k"], 10);
    assert_eq!(v["regime"], "small");
    assert!(v["cutoff_k"].as_u64().unwrap() <= 601);
    assert_eq!(v["cutoff_holds"], false);
    assert!(v["chain"].as_array().unwrap().len() > 3);
}

#[test]
fn reduce_json() {
    let (code, out, _) = pillai(&[
        "reduce", "--tau", "log(3)/log(2)", "--mu", "log(5)/log(2)", "--A", "10", "--B", "2", "--M", "1000",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["epsilon"].as_f64().unwrap() > 0.0);
    let w: u64 = v["w_bound"].as_str().unwrap().parse().unwrap();
    assert!(w < 40);
}

#[test]
fn reduce_rejects_bad_input() {
    let (code, _, err) = pillai(&["reduce", "--tau", "log(", "--mu", "1", "--A", "1", "--B", "2", "--M", "10"]);
    assert_eq!(code, 2);
    assert!(err.contains("error"));
}

#[test]
fn search_json_lines() {
    let (code, out, _) = pillai(&["search", "--k-lo", "4", "--k-hi", "6", "--n-max", "40", "--m-max", "30"]);
    assert_eq!(code, 0);
    let recs: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 8);
    for r in &recs {
        assert_eq!(r["lhs"], r["rhs"]);
        assert_eq!(r["lhs"], r["c"]);
    }
}

#[test]
fn certify_small_scope_passes_and_writes_report() {
    let dir = std::env::temp_dir().join(format!("pillai-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let report = dir.join("report.json");
    let md = dir.join("report.md");
    let (code, _, err) = pillai(&[
        "certify",
        "--k-hi",
        "5",
        "--no-large-k",
        "--out",
        report.to_str().unwrap(),
        "--markdown",
        md.to_str().unwrap(),
        "--resume",
        dir.to_str().unwrap(),
    ]);
    assert!(err.contains("PASS") || err.contains("Pass"), "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["status"]["small_k"], "PASS");
    assert_eq!(v["status"]["large_k"], "SKIPPED");
    assert_eq!(code, if v["status"]["overall"] == "PASS" { 0 } else { 1 });
    assert!(dir.join("small_k_0004.json").exists());
    assert!(std::fs::read_to_string(&md).unwrap().contains('|'));
    std::fs::remove_dir_all(&dir).ok();
}
