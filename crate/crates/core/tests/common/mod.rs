#![allow(dead_code)]

pub mod checks;
pub mod e2e;
pub mod oracles;

use std::path::PathBuf;

use serde_json::Value;
use trialmatch::evaluation::Metrics;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_json(rel: &str) -> Value {
    let path = fixtures().join(rel);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Counts must match exactly, ratios within 1e-9.
pub fn metrics_match(got: &Metrics, want: &Value) -> Result<(), String> {
    let count = |k: &str| want[k].as_u64().unwrap() as usize;
    let ratio = |k: &str| want[k].as_f64().unwrap();
    let counts_ok = (got.tp, got.fp, got.fn_) == (count("tp"), count("fp"), count("fn"));
    let ratios_ok = (got.precision - ratio("precision")).abs() < 1e-9
        && (got.recall - ratio("recall")).abs() < 1e-9
        && (got.f1 - ratio("f1")).abs() < 1e-9;
    if counts_ok && ratios_ok {
        Ok(())
    } else {
        Err(format!("got {got:?}, want {want}"))
    }
}

use trialmatch::ingest::{ingest_path, IngestFilter, TrialDoc, DEFAULT_MAX_LINES};

pub const TRANSCRIPT: &str = "replay/corpus_3shot.jsonl";

/// The oncology treatment trials of the bundled corpus, prepared for structuring.
pub fn corpus_trials() -> Vec<TrialDoc> {
    let report = ingest_path(
        &fixtures().join("corpus/trials"),
        Some(&IngestFilter::default()),
        DEFAULT_MAX_LINES,
    )
    .unwrap();
    assert!(report.failed.is_empty());
    report.kept
}

pub fn corpus_trial(nct_id: &str) -> TrialDoc {
    corpus_trials().into_iter().find(|t| t.nct_id == nct_id).unwrap()
}

/// Regeneration tests write instead of comparing when set.
pub fn update_golden() -> bool {
    std::env::var_os("TRIALMATCH_UPDATE_GOLDEN").is_some()
}

/// Compares `actual` with a checked-in file, or rewrites it in update mode.
pub fn assert_golden(rel: &str, actual: &str) {
    let path = fixtures().join(rel);
    if update_golden() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{} differs from output:\n{actual}", path.display());
}
