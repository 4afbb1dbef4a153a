mod common;

use common::checks;
use common::fixtures;
use trialmatch::evaluation::{dnf_prf, read_jsonl, Averaging};
use trialmatch::logic::StructuredTrial;

#[test]
fn entity_fixture_canonical_and_normalized() {
    checks::entity_fixture().unwrap();
}

#[test]
fn dnf_fixture_scopes() {
    checks::dnf_fixture().unwrap();
}

#[test]
fn dnf_permutation_gives_perfect_score() {
    let gold: Vec<StructuredTrial> = read_jsonl(&fixtures().join("metrics/dnf_gold.jsonl")).unwrap();
    let mut pred = gold.clone();
    for t in &mut pred {
        t.clauses.reverse();
        for c in &mut t.clauses {
            c.biomarker_inclusion.reverse();
        }
    }
    pred.reverse();
    for m in dnf_prf(&gold, &pred, Averaging::Micro).unwrap().values() {
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }
}

#[test]
fn zero_denominator_cases() {
    checks::zero_denominator().unwrap();
}

#[test]
fn enrollment_fixture_strict_and_relaxed() {
    checks::enrollment_fixture().unwrap();
}

#[test]
fn relaxed_policy_recall_not_below_strict() {
    assert!(checks::planted_recall(true, true) >= checks::planted_recall(false, false));
    assert!(checks::planted_recall(true, false) >= checks::planted_recall(false, false));
    assert!(checks::planted_recall(false, true) >= checks::planted_recall(false, false));
}

#[test]
fn feedback_fixture() {
    checks::feedback_fixture().unwrap();
}

#[test]
fn written_match_records_give_the_same_verdicts() {
    use trialmatch::evaluation::{compute_verdicts, verdicts_from_records};
    use trialmatch::matcher::{MatchOptions, MatchRecord, Matcher};
    use trialmatch::ontology::Ontology;

    let (trials, patients, _) = checks::enrollment_setup();
    let ont = Ontology::bundled();
    let matcher = Matcher::new(&ont, MatchOptions::default());
    let records = matcher.match_all(&patients, &trials);
    assert_eq!(records.len(), patients.len() * trials.len());
    let text: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let reread: Vec<MatchRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(verdicts_from_records(&reread), compute_verdicts(&matcher, &patients, &trials));
}
