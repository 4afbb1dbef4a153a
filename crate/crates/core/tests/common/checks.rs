//! Fixture checks shared by the unit-style tests and the acceptance report.
//! Each returns a short summary on success and a description of the first
//! mismatch otherwise.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use trialmatch::evaluation::{
    compute_verdicts, dnf_prf, enrollment_recall, entity_prf, feedback_prf, match_disjuncts, read_jsonl,
    Averaging, EnrollmentPair, EntityCategory, EntityOptions, FeedbackEvent, GoldTrial, Metrics,
};
use trialmatch::extraction::{extract_structured, serialize_trial_input, ExtractionError, Extractor};
use trialmatch::ingest::TrialDoc;
use trialmatch::llm::{ChatRequest, CompletionConfig, LlmClient, LlmError, Transport, TransportFailure};
use trialmatch::logic::{Scope, StructuredTrial};
use trialmatch::matcher::{load_patients, MatchOptions, Matcher, PatientRecord};
use trialmatch::ontology::Ontology;

use super::{corpus_trials, fixtures, metrics_match, read_json};

pub type Check = Result<String, String>;

fn trials(rel: &str) -> Vec<StructuredTrial> {
    read_jsonl(&fixtures().join(rel)).unwrap()
}

pub fn entity_fixture() -> Check {
    let gold: Vec<GoldTrial> = trials("metrics/entities_gold.jsonl");
    let pred = trials("metrics/entities_pred.jsonl");
    let want = read_json("metrics/entities_expected.json");
    let ont = Ontology::bundled();
    for (mode, opts) in [
        ("canonical", EntityOptions::default()),
        ("normalized", EntityOptions { normalizer: Some(&ont), averaging: Averaging::Micro }),
    ] {
        let got = entity_prf(&gold, &pred, opts).map_err(|e| e.to_string())?;
        for cat in EntityCategory::ALL {
            let key = serde_json::to_value(cat).unwrap();
            metrics_match(&got[&cat], &want[mode][key.as_str().unwrap()]).map_err(|e| format!("{mode}/{key}: {e}"))?;
        }
    }
    Ok("entity_prf canonical+normalized".into())
}

pub fn dnf_fixture() -> Check {
    let gold = trials("metrics/dnf_gold.jsonl");
    let pred = trials("metrics/dnf_pred.jsonl");
    let want = read_json("metrics/dnf_expected.json");
    let got = dnf_prf(&gold, &pred, Averaging::Micro).map_err(|e| e.to_string())?;
    for scope in Scope::ALL {
        let key = serde_json::to_value(scope).unwrap();
        metrics_match(&got[&scope], &want["scopes"][key.as_str().unwrap()]).map_err(|e| format!("{key}: {e}"))?;
    }
    let nested = &want["nested_trial"];
    let id = nested["nct_id"].as_str().unwrap();
    let one = |v: &[StructuredTrial]| v.iter().filter(|t| t.nct_id == id).cloned().collect::<Vec<_>>();
    let got = dnf_prf(&one(&gold), &one(&pred), Averaging::Micro).map_err(|e| e.to_string())?;
    metrics_match(&got[&Scope::HistologyBiomarker], &nested["histology_biomarker"])
        .map_err(|e| format!("nested: {e}"))?;
    Ok("dnf_prf three scopes + nested trial".into())
}

pub fn zero_denominator() -> Check {
    let expect = |m: Metrics, p: f64, r: f64, f: f64, what: &str| {
        if (m.precision, m.recall, m.f1) == (p, r, f) {
            Ok(())
        } else {
            Err(format!("{what}: {m:?}"))
        }
    };
    expect(Metrics::from_counts(0, 0, 0), 1.0, 1.0, 1.0, "empty vs empty")?;
    expect(Metrics::from_counts(0, 0, 4), 0.0, 0.0, 0.0, "nothing predicted")?;
    expect(Metrics::from_counts(0, 4, 0), 0.0, 0.0, 0.0, "nothing expected")?;
    expect(match_disjuncts(&[], &[]).into(), 1.0, 1.0, 1.0, "empty disjunct lists")?;
    Ok("zero-denominator conventions".into())
}

pub fn enrollment_setup() -> (Vec<StructuredTrial>, Vec<PatientRecord>, Vec<EnrollmentPair>) {
    let trials = trials("corpus/gold.jsonl");
    let patients = load_patients(&fixtures().join("metrics/enrollment_patients.jsonl")).unwrap();
    let pairs = read_jsonl(&fixtures().join("metrics/enrollment_pairs.jsonl")).unwrap();
    (trials, patients, pairs)
}

/// Recall on the planted enrollment corpus under the given matcher flags.
pub fn planted_recall(lenient: bool, ignore_exclusions: bool) -> f64 {
    let (trials, patients, pairs) = enrollment_setup();
    let ont = Ontology::bundled();
    let opts = MatchOptions { lenient, ignore_exclusions, ..MatchOptions::default() };
    let verdicts = compute_verdicts(&Matcher::new(&ont, opts), &patients, &trials);
    enrollment_recall(&pairs, &verdicts).recall
}

pub fn enrollment_fixture() -> Check {
    let (trials, patients, pairs) = enrollment_setup();
    let want = read_json("metrics/enrollment_expected.json");
    let ont = Ontology::bundled();
    for (key, lenient, ignore) in [("strict", false, false), ("lenient_ignore_exclusions", true, true)] {
        let opts = MatchOptions { lenient, ignore_exclusions: ignore, ..MatchOptions::default() };
        let verdicts = compute_verdicts(&Matcher::new(&ont, opts), &patients, &trials);
        let r = enrollment_recall(&pairs, &verdicts);
        let w = &want[key];
        let n = |k: &str| w[k].as_u64().unwrap() as usize;
        if (r.matched, r.total, r.unresolved.len()) != (n("matched"), n("total"), n("unresolved"))
            || (r.recall - w["recall"].as_f64().unwrap()).abs() >= 1e-9
        {
            return Err(format!("{key}: got {r:?}, want {w}"));
        }
    }
    Ok("enrollment_recall strict+relaxed".into())
}

pub fn feedback_fixture() -> Check {
    let (trials, patients, _) = enrollment_setup();
    let events: Vec<FeedbackEvent> = read_jsonl(&fixtures().join("metrics/feedback.jsonl")).unwrap();
    let want = read_json("metrics/feedback_expected.json");
    let ont = Ontology::bundled();
    let verdicts = compute_verdicts(&Matcher::new(&ont, MatchOptions::default()), &patients, &trials);
    let r = feedback_prf(&events, &verdicts);
    metrics_match(&r.metrics, &want)?;
    let skipped: Vec<String> = serde_json::from_value(want["skipped_patients"].clone()).unwrap();
    if r.scored as u64 != want["scored"].as_u64().unwrap() || r.skipped_patients != skipped || !r.unresolved.is_empty()
    {
        return Err(format!("got {r:?}"));
    }
    Ok(format!("feedback_prf over {} events", events.len()))
}

/// Counts requests and answers with an empty clause list.
#[derive(Default)]
pub struct CountingTransport {
    pub calls: AtomicUsize,
}

impl Transport for CountingTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok("[]".into())
    }
}

/// The longest prepared trial in the corpus.
pub fn largest_trial() -> TrialDoc {
    corpus_trials()
        .into_iter()
        .max_by_key(|t| serialize_trial_input(t).len())
        .unwrap()
}

pub fn context_overflow() -> Check {
    let transport = Arc::new(CountingTransport::default());
    let config = CompletionConfig { context_token_limit: 4096, ..CompletionConfig::default() };
    let client = LlmClient::new(config, transport.clone()).unwrap();
    let trial = largest_trial();
    let err = match extract_structured(&trial, &Extractor::Llm { client: &client, shots: 3 }) {
        Ok(_) => return Err("extraction succeeded".into()),
        Err(e) => e,
    };
    let calls = transport.calls.load(Ordering::SeqCst);
    match err {
        ExtractionError::Llm(LlmError::ContextOverflow { limit: 4096, .. }) if calls == 0 => {
            Ok(format!("{}: {err}", trial.nct_id))
        }
        other => Err(format!("{other:?} after {calls} calls")),
    }
}
