use std::path::PathBuf;

use pillai_core::pipeline::{
    certify, emit_report, run_small_k_phase, small_k_row, CertifyConfig, Format, PipelineError, Verdict,
};

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("pillai-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn small_k_rows_are_deterministic() {
    let a = small_k_row(6, 0).unwrap();
    let b = small_k_row(6, 0).unwrap();
    assert_eq!(a, b);
    // a higher starting precision must not change any bound
    let c = small_k_row(6, 2048).unwrap();
    assert_eq!(a.n_bound, c.n_bound);
    for (x, y) in a.sweeps().iter().zip(c.sweeps()) {
        assert_eq!(x.max_w_bound, y.max_w_bound, "{}", x.name);
    }
}

#[test]
fn resume_reuses_checkpoints() {
    let dir = scratch_dir("resume");
    let first = run_small_k_phase(4, 5, 0, Some(&dir)).unwrap();
    assert!(first.resumed.is_empty());
    assert!(dir.join("small_k_0004.json").exists());
    let second = run_small_k_phase(4, 6, 0, Some(&dir)).unwrap();
    assert_eq!(second.resumed, vec![4, 5]);
    assert_eq!(first.rows[..], second.rows[..2]);
    assert_eq!(second.status, Verdict::Pass);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn corrupt_checkpoint_is_an_error() {
    let dir = scratch_dir("corrupt");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("small_k_0004.json"), "{ not json").unwrap();
    match run_small_k_phase(4, 4, 0, Some(&dir)) {
        Err(PipelineError::Checkpoint { path, .. }) => assert!(path.ends_with("small_k_0004.json")),
        other => panic!("expected a checkpoint error, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn certify_small_scope_without_large_k() {
    let cfg = CertifyConfig { k_hi: 6, n_max: 200, m_max: 200, large_k: false, ..CertifyConfig::default() };
    let r = certify(&cfg).unwrap();
    assert_eq!(r.status.search, Verdict::Pass);
    assert_eq!(r.status.small_k, Verdict::Pass);
    assert_eq!(r.status.large_k, Verdict::Skipped);
    assert_eq!(r.solutions.len(), 8);
    // phases are independent: the search scope does not leak into the sweep
    assert_eq!(r.small_k.as_ref().unwrap().rows.len(), 3);
    let json: serde_json::Value = serde_json::from_slice(&emit_report(&r, Format::Json)).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["status"]["small_k"], "PASS");
    let md = String::from_utf8(emit_report(&r, Format::Markdown)).unwrap();
    assert!(md.contains("small"), "{md}");
}
