use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{serialize_trial_input, ExtractionResult};
use crate::ingest::TrialDoc;
use crate::llm::{ChatMessage, LlmClient};
use crate::matcher::PatientRecord;

pub const DIRECT_MATCH_SYSTEM: &str = include_str!("../../data/prompts/direct_match_system.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Eligible,
    NotEligible,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectMatch {
    pub verdict: Verdict,
    pub narrative: String,
}

/// Structured fields as JSON followed by the free-text pathology report.
pub fn patient_bundle(patient: &PatientRecord) -> String {
    let structured = PatientRecord {
        pathology_report: None,
        ..patient.clone()
    };
    let json = serde_json::to_string_pretty(&structured).expect("patient record serializes");
    let report = patient.pathology_report.as_deref().unwrap_or("(none)");
    format!("Patient Structured Data:\n{json}\n\nPathology Report:\n{}", report.trim_end())
}

/// System message plus one user message holding the trial and the patient.
pub fn build_direct_match_messages(patient_bundle: &str, trial: &TrialDoc) -> ExtractionResult<Vec<ChatMessage>> {
    let user = format!(
        "Clinical Trial Study Design Detail:\n{}\n---\n{}",
        serialize_trial_input(trial),
        patient_bundle.trim_end()
    );
    Ok(vec![
        ChatMessage::system(DIRECT_MATCH_SYSTEM.trim_end())?,
        ChatMessage::user(user)?,
    ])
}

/// Asks the model whether the patient fits the trial. A trial without
/// criteria text is `Uncertain` and no request is made.
pub fn llm_direct_match(patient_bundle: &str, trial: &TrialDoc, client: &LlmClient) -> ExtractionResult<DirectMatch> {
    if trial.criteria_text.trim().is_empty() {
        return Ok(DirectMatch {
            verdict: Verdict::Uncertain,
            narrative: String::new(),
        });
    }
    let messages = build_direct_match_messages(patient_bundle, trial)?;
    let completion = client.complete(&messages)?;
    Ok(DirectMatch {
        verdict: parse_verdict(&completion.text),
        narrative: completion.text,
    })
}

/// The concluding sentence if there is one, else the last paragraph.
fn conclusion(narrative: &str) -> &str {
    let lower = narrative.to_ascii_lowercase();
    if let Some(i) = lower.rfind("in conclusion") {
        let tail = &narrative[i..];
        let end = tail
            .find(['.', '\n'])
            .map(|e| e + 1)
            .unwrap_or(tail.len());
        return &tail[..end];
    }
    narrative
        .split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .last()
        .unwrap_or("")
}

/// Keyword rules over the conclusion: negations first, then hedges, then
/// a plain "eligible". Anything else is uncertain.
pub fn parse_verdict(narrative: &str) -> Verdict {
    static NEG: OnceLock<Regex> = OnceLock::new();
    static HEDGE: OnceLock<Regex> = OnceLock::new();
    static POS: OnceLock<Regex> = OnceLock::new();
    let neg = NEG.get_or_init(|| {
        Regex::new(r"(?i)\b(not|n't)\s+(be\s+|appear\s+to\s+be\s+|seem\s+to\s+be\s+)?eligible\b|\bineligible\b|\b(does\s+not|doesn't|do\s+not|fails?\s+to)\s+(meet|satisfy)\b|\bnot\s+a\s+(suitable\s+|good\s+)?candidate\b")
            .unwrap()
    });
    let hedge = HEDGE.get_or_init(|| {
        Regex::new(r"(?i)\b(uncertain|unclear|cannot\s+(be\s+)?determined?|unable\s+to\s+determine|insufficient|more\s+information|(may|might|could)\s+(potentially\s+)?be\s+eligible|potentially\s+eligible)\b")
            .unwrap()
    });
    let pos = POS.get_or_init(|| Regex::new(r"(?i)\beligible\b|\bmeets\s+(all\s+)?the\s+(trial\s+)?criteria\b").unwrap());
    let text = conclusion(narrative);
    if neg.is_match(text) {
        Verdict::NotEligible
    } else if hedge.is_match(text) {
        Verdict::Uncertain
    } else if pos.is_match(text) {
        Verdict::Eligible
    } else {
        Verdict::Uncertain
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(
            parse_verdict("Reasons...\n\nIn conclusion, the patient appears to be eligible for the trial."),
            Verdict::Eligible
        );
        assert_eq!(parse_verdict("Summary.\n\nThe patient is NOT eligible."), Verdict::NotEligible);
        assert_eq!(parse_verdict("In conclusion, the patient does not meet the criteria."), Verdict::NotEligible);
        assert_eq!(parse_verdict("In conclusion, eligibility is unclear without staging."), Verdict::Uncertain);
        assert_eq!(parse_verdict("Some analysis without a decision."), Verdict::Uncertain);
        assert_eq!(parse_verdict(""), Verdict::Uncertain);
    }

    #[test]
    fn conclusion_sentence_beats_earlier_text() {
        let n = "The patient would not be eligible if grade 1.\n\nIn conclusion, the patient is eligible. Other notes follow.";
        assert_eq!(parse_verdict(n), Verdict::Eligible);
    }

    #[test]
    fn message_layout() {
        let t = TrialDoc {
            nct_id: "NCT00000003".into(),
            criteria_text: "- Age >= 18".into(),
            ..TrialDoc::default()
        };
        let m = build_direct_match_messages("Patient Metadata:\nMale", &t).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m[1].content.starts_with("Clinical Trial Study Design Detail:\n<criteria>"));
        assert!(m[1].content.ends_with("---\nPatient Metadata:\nMale"));
    }
}
