//! Clause-by-clause matching of structured trials against structured patients.

mod disease;
mod patient;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{normalize_atom, EligibilityClause, StructuredTrial};
use crate::ontology::{parse_biomarker, Biomarker, Ontology};

pub use disease::{DiseaseOutcome, DiseaseStateTable};
pub use patient::{load_patients, stage_roman, Lab, PatientRecord, PdL1, ScoreKind};

#[derive(Error, Debug)]
pub enum MatchError {
    #[error("invalid patient record: {0}")]
    InvalidPatient(String),

    #[error("invalid matcher configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type MatchResult<T> = Result<T, MatchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    HistologyInc,
    BiomarkerInc,
    HistologyExc,
    BiomarkerExc,
    DiseaseState,
}

impl ConditionKind {
    pub fn is_exclusion(self) -> bool {
        matches!(self, ConditionKind::HistologyExc | ConditionKind::BiomarkerExc)
    }
}

/// Outcome for one atom. For exclusion atoms `satisfied` means the exclusion
/// applies to the patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub atom: String,
    pub kind: ConditionKind,
    pub satisfied: bool,
    /// False when the atom could not be interpreted against the ontologies.
    pub resolved: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseTrace {
    pub clause: EligibilityClause,
    pub conditions: Vec<ConditionResult>,
    pub satisfied: bool,
}

impl ClauseTrace {
    /// Satisfied inclusion atoms (disease state counts when non-empty).
    pub fn specificity(&self) -> usize {
        self.conditions
            .iter()
            .filter(|c| !c.kind.is_exclusion() && c.satisfied && c.resolved)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialMatch {
    pub nct_id: String,
    pub eligible: bool,
    pub matched_clause_index: Option<usize>,
    pub clause_traces: Vec<ClauseTrace>,
}

impl TrialMatch {
    pub fn score(&self) -> usize {
        self.matched_clause_index
            .map(|i| self.clause_traces[i].specificity())
            .unwrap_or(0)
    }
}

/// One patient/trial outcome as written by batch matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub patient_id: String,
    pub nct_id: String,
    pub eligible: bool,
    pub matched_clause_index: Option<usize>,
    pub score: usize,
    #[serde(default)]
    pub clause_traces: Vec<ClauseTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub nct_id: String,
    pub eligible: bool,
    pub matched_clause_index: Option<usize>,
    pub score: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    pub patient_id: String,
    pub entries: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Unresolved inclusion atoms fail the clause (strict) or are skipped (lenient).
    pub lenient: bool,
    /// Skip exclusion atoms entirely, favoring recall.
    pub ignore_exclusions: bool,
    pub disease_states: DiseaseStateTable,
}

/// Matches trials against patients using a loaded ontology.
#[derive(Debug, Clone)]
pub struct Matcher<'a> {
    ontology: &'a Ontology,
    options: MatchOptions,
}

impl<'a> Matcher<'a> {
    pub fn new(ontology: &'a Ontology, options: MatchOptions) -> Self {
        Self { ontology, options }
    }

    pub fn options(&self) -> &MatchOptions {
        &self.options
    }

    fn inclusion(&self, atom: &str, kind: ConditionKind, outcome: Option<(bool, String)>) -> ConditionResult {
        match outcome {
            Some((satisfied, reason)) => ConditionResult {
                atom: atom.to_string(),
                kind,
                satisfied,
                resolved: true,
                reason,
            },
            None if self.options.lenient => ConditionResult {
                atom: atom.to_string(),
                kind,
                satisfied: true,
                resolved: false,
                reason: format!("unresolved atom \"{atom}\" skipped (lenient)"),
            },
            None => ConditionResult {
                atom: atom.to_string(),
                kind,
                satisfied: false,
                resolved: false,
                reason: format!("unresolved atom \"{atom}\""),
            },
        }
    }

    fn exclusion(&self, atom: &str, kind: ConditionKind, outcome: Option<(bool, String)>) -> ConditionResult {
        match outcome {
            Some((triggered, reason)) => ConditionResult {
                atom: atom.to_string(),
                kind,
                satisfied: triggered,
                resolved: true,
                reason,
            },
            None => ConditionResult {
                atom: atom.to_string(),
                kind,
                satisfied: false,
                resolved: false,
                reason: format!("unresolved atom \"{atom}\" not triggered"),
            },
        }
    }

    /// Whether the histology atom covers the patient's histology; `None` if the
    /// atom does not resolve to any concept.
    fn histology_hit(&self, atom: &str, patient: &PatientRecord) -> Option<(bool, String)> {
        let h = &self.ontology.histology;
        let concepts = h.normalize_histology(atom);
        if concepts.is_empty() {
            let code_match = normalize_atom(atom) == normalize_atom(&patient.histology);
            return code_match.then(|| (true, format!("\"{atom}\" equals patient histology")));
        }
        for c in &concepts {
            if h.subsumes_histology(&c.code, &patient.histology).unwrap_or(false) {
                return Some((true, format!("{} subsumes patient histology {}", c.code, patient.histology)));
            }
        }
        let codes: Vec<&str> = concepts.iter().map(|c| c.code.as_str()).collect();
        Some((false, format!("{} does not subsume patient histology {}", codes.join("|"), patient.histology)))
    }

    /// Whether some patient biomarker is covered by the atom; `None` when the
    /// atom does not parse and matches no patient biomarker verbatim.
    fn biomarker_hit(&self, atom: &str, patient_markers: &[Biomarker]) -> Option<(bool, String)> {
        match parse_biomarker(atom) {
            Ok(criterion) => {
                let hit = patient_markers
                    .iter()
                    .find(|p| self.ontology.subsumes_biomarker(&criterion, p));
                Some(match hit {
                    Some(p) => (true, format!("patient biomarker \"{p}\" subsumed by \"{atom}\"")),
                    None => (false, format!("no patient biomarker subsumed by \"{atom}\"")),
                })
            }
            Err(_) => {
                let key = normalize_atom(atom);
                patient_markers
                    .iter()
                    .any(|p| normalize_atom(&p.to_string()) == key)
                    .then(|| (true, format!("patient biomarker equals \"{atom}\"")))
            }
        }
    }

    /// Evaluates every atom of one clause against the patient.
    pub fn match_clause(&self, clause: &EligibilityClause, patient: &PatientRecord) -> ClauseTrace {
        let markers = patient.effective_biomarkers();
        let mut conditions = Vec::new();

        let hist = clause.histology_inclusion.trim();
        conditions.push(self.inclusion(hist, ConditionKind::HistologyInc, self.histology_hit(hist, patient)));

        for atom in &clause.biomarker_inclusion {
            conditions.push(self.inclusion(atom, ConditionKind::BiomarkerInc, self.biomarker_hit(atom, &markers)));
        }

        match self
            .options
            .disease_states
            .evaluate(&clause.disease_state, &patient.disease_terms())
        {
            DiseaseOutcome::Empty => {}
            DiseaseOutcome::Satisfied(r) => {
                conditions.push(self.inclusion(&clause.disease_state, ConditionKind::DiseaseState, Some((true, r))))
            }
            DiseaseOutcome::Unsatisfied(r) => {
                conditions.push(self.inclusion(&clause.disease_state, ConditionKind::DiseaseState, Some((false, r))))
            }
            DiseaseOutcome::Unresolved => {
                conditions.push(self.inclusion(&clause.disease_state, ConditionKind::DiseaseState, None))
            }
        }

        for (atoms, kind) in [
            (&clause.histology_exclusion, ConditionKind::HistologyExc),
            (&clause.biomarker_exclusion, ConditionKind::BiomarkerExc),
        ] {
            for atom in atoms {
                if self.options.ignore_exclusions {
                    conditions.push(ConditionResult {
                        atom: atom.clone(),
                        kind,
                        satisfied: false,
                        resolved: true,
                        reason: "exclusions ignored".into(),
                    });
                    continue;
                }
                let outcome = match kind {
                    ConditionKind::HistologyExc => self.histology_hit(atom, patient),
                    _ => self.biomarker_hit(atom, &markers),
                };
                conditions.push(self.exclusion(atom, kind, outcome));
            }
        }

        let satisfied = conditions
            .iter()
            .all(|c| if c.kind.is_exclusion() { !c.satisfied } else { c.satisfied });
        ClauseTrace {
            clause: clause.clone(),
            conditions,
            satisfied,
        }
    }

    /// OR over the trial's clauses; the first satisfied clause is reported.
    pub fn match_trial(&self, trial: &StructuredTrial, patient: &PatientRecord) -> TrialMatch {
        let clause_traces: Vec<ClauseTrace> = trial
            .clauses
            .iter()
            .map(|c| self.match_clause(c, patient))
            .collect();
        let matched_clause_index = clause_traces.iter().position(|t| t.satisfied);
        TrialMatch {
            nct_id: trial.nct_id.clone(),
            eligible: matched_clause_index.is_some(),
            matched_clause_index,
            clause_traces,
        }
    }

    /// Every patient against every trial, patient-major in input order.
    pub fn match_all(&self, patients: &[PatientRecord], trials: &[StructuredTrial]) -> Vec<MatchRecord> {
        patients
            .iter()
            .flat_map(|p| {
                trials.iter().map(move |t| {
                    let m = self.match_trial(t, p);
                    MatchRecord {
                        patient_id: p.patient_id.clone(),
                        score: m.score(),
                        nct_id: m.nct_id,
                        eligible: m.eligible,
                        matched_clause_index: m.matched_clause_index,
                        clause_traces: m.clause_traces,
                    }
                })
            })
            .collect()
    }

    /// Every trial for one patient, eligible first, then by score, then NCT ID.
    pub fn rank_candidates(&self, patient: &PatientRecord, trials: &[StructuredTrial]) -> CandidateList {
        let mut entries: Vec<CandidateEntry> = trials
            .iter()
            .map(|t| {
                let m = self.match_trial(t, patient);
                CandidateEntry {
                    score: m.score(),
                    nct_id: m.nct_id,
                    eligible: m.eligible,
                    matched_clause_index: m.matched_clause_index,
                }
            })
            .collect();
        entries.sort_by(|a, b| {
            b.eligible
                .cmp(&a.eligible)
                .then(b.score.cmp(&a.score))
                .then(a.nct_id.cmp(&b.nct_id))
        });
        CandidateList {
            patient_id: patient.patient_id.clone(),
            entries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patient(hist: &str, descriptors: &[&str], markers: &[&str]) -> PatientRecord {
        PatientRecord {
            patient_id: "P".into(),
            birth_date: None,
            gender: String::new(),
            tumor_site: String::new(),
            histology: hist.into(),
            stage: String::new(),
            disease_descriptors: descriptors.iter().map(|s| s.to_string()).collect(),
            biomarkers: markers.iter().map(|m| parse_biomarker(m).unwrap()).collect(),
            pd_l1: None,
            medications: vec![],
            labs: vec![],
            pathology_report: None,
        }
    }

    fn clause(hist: &str, state: &str, inc: &[&str], hexc: &[&str], bexc: &[&str]) -> EligibilityClause {
        EligibilityClause {
            cohort: String::new(),
            disease_state: state.into(),
            histology_inclusion: hist.into(),
            biomarker_inclusion: inc.iter().map(|s| s.to_string()).collect(),
            histology_exclusion: hexc.iter().map(|s| s.to_string()).collect(),
            biomarker_exclusion: bexc.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn solid_tumor_ras_clause() {
        let o = Ontology::bundled();
        let m = Matcher::new(&o, MatchOptions::default());
        let t = m.match_clause(
            &clause("Solid Tumor", "advanced or metastatic", &["RAS mutation"], &[], &[]),
            &patient("LUAD", &["metastatic"], &["KRAS G12C"]),
        );
        assert!(t.satisfied, "{t:#?}");
        assert_eq!(t.specificity(), 3);
    }

    #[test]
    fn exclusion_triggers() {
        let o = Ontology::bundled();
        let m = Matcher::new(&o, MatchOptions::default());
        let c = clause("Solid Tumor", "", &[], &["Lung Adenocarcinoma"], &[]);
        let p = patient("LUAD", &[], &[]);
        assert!(!m.match_clause(&c, &p).satisfied);
        let lax = Matcher::new(
            &o,
            MatchOptions {
                ignore_exclusions: true,
                ..MatchOptions::default()
            },
        );
        assert!(lax.match_clause(&c, &p).satisfied);
    }

    #[test]
    fn missing_biomarker_reason() {
        let o = Ontology::bundled();
        let m = Matcher::new(&o, MatchOptions::default());
        let t = m.match_clause(
            &clause("NSCLC", "", &["EGFR L858R"], &[], &[]),
            &patient("LUAD", &[], &["KRAS G12C"]),
        );
        assert!(!t.satisfied);
        assert!(t.conditions[1].reason.starts_with("no patient biomarker subsumed by"));
    }

    #[test]
    fn unresolved_strict_vs_lenient() {
        let o = Ontology::bundled();
        let c = clause("Glioma", "", &["frobnication of widgets"], &[], &[]);
        let p = patient("AASTR", &[], &["IDH1 R132H"]);
        assert!(!Matcher::new(&o, MatchOptions::default()).match_clause(&c, &p).satisfied);
        let lenient = MatchOptions {
            lenient: true,
            ..MatchOptions::default()
        };
        assert!(Matcher::new(&o, lenient).match_clause(&c, &p).satisfied);
    }

    #[test]
    fn empty_trial_not_eligible() {
        let o = Ontology::bundled();
        let m = Matcher::new(&o, MatchOptions::default());
        let r = m.match_trial(&StructuredTrial::from_clauses("NCT00000001", vec![]), &patient("LUAD", &[], &[]));
        assert!(!r.eligible);
        assert_eq!(r.matched_clause_index, None);
    }
}
