//! Scoring of structured predictions and match verdicts against references.
//!
//! Counts are micro-averaged over trials unless macro averaging is requested.
//! Precision (recall) is 0 when nothing was predicted (expected), except that
//! an empty prediction against an empty reference scores 1 on all three.

mod report;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{normalize_atom, Conjunction, LogicError, Scope, StructuredTrial};
use crate::matcher::{MatchRecord, Matcher, PatientRecord};
use crate::ontology::{parse_biomarker, Ontology};

pub use report::{Column, ComparisonReport, ReportRow, Stat};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("predicted trial {0} has no gold annotation")]
    MissingGold(String),

    #[error("trial {0} appears more than once in {1}")]
    DuplicateTrial(String, &'static str),

    #[error("invalid gold trial: {0}")]
    InvalidGold(#[from] LogicError),

    #[error("report has no rows")]
    EmptyReport,

    #[error("report row {0} has {1} values for {2} columns")]
    RowShape(String, usize, usize),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type EvalResult<T> = Result<T, EvalError>;

/// Reference structuring uses the same schema as predictions.
pub type GoldTrial = StructuredTrial;

/// Raw confusion counts; merging is plain addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall) = if tp + fp == 0 && tp + fn_ == 0 {
            (1.0, 1.0)
        } else {
            let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            (ratio(tp, tp + fp), ratio(tp, tp + fn_))
        };
        Self {
            precision,
            recall,
            f1: f1_of(precision, recall),
            tp,
            fp,
            fn_,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }

    /// Unweighted mean of per-item scores; counts are summed.
    pub fn macro_average(items: &[Metrics]) -> Self {
        if items.is_empty() {
            return Metrics::from_counts(0, 0, 0);
        }
        let n = items.len() as f64;
        let total = items.iter().fold(Counts::default(), |acc, m| acc + m.counts());
        Self {
            precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
            tp: total.tp,
            fp: total.fp,
            fn_: total.fn_,
        }
    }
}

impl From<Counts> for Metrics {
    fn from(c: Counts) -> Self {
        Metrics::from_counts(c.tp, c.fp, c.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

fn aggregate(per_trial: &[Counts], averaging: Averaging) -> Metrics {
    match averaging {
        Averaging::Micro => per_trial.iter().copied().fold(Counts::default(), Add::add).into(),
        Averaging::Macro => Metrics::macro_average(&per_trial.iter().map(|&c| c.into()).collect::<Vec<_>>()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityCategory {
    Histology,
    Biomarker,
}

impl EntityCategory {
    pub const ALL: [EntityCategory; 2] = [EntityCategory::Histology, EntityCategory::Biomarker];

    pub fn label(self) -> &'static str {
        match self {
            EntityCategory::Histology => "Histology",
            EntityCategory::Biomarker => "Biomarker",
        }
    }
}

/// Entity key: the canonical string, or with an ontology the concept code
/// (histology) or canonical biomarker rendering. Unresolvable text falls
/// back to the canonical string.
fn entity_key(text: &str, category: EntityCategory, ontology: Option<&Ontology>) -> String {
    let canonical = normalize_atom(text);
    let Some(ont) = ontology else {
        return canonical;
    };
    match category {
        EntityCategory::Histology => ont
            .histology
            .normalize_histology(text)
            .first()
            .map(|c| c.code.clone())
            .unwrap_or(canonical),
        EntityCategory::Biomarker => parse_biomarker(text)
            .map(|b| format!("#{}", b.to_string().to_lowercase()))
            .unwrap_or(canonical),
    }
}

/// Entities of one category pooled over inclusion and exclusion lists.
pub fn entity_set(trial: &StructuredTrial, category: EntityCategory, ontology: Option<&Ontology>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for c in &trial.clauses {
        let texts: Vec<&String> = match category {
            EntityCategory::Histology => std::iter::once(&c.histology_inclusion)
                .chain(&c.histology_exclusion)
                .collect(),
            EntityCategory::Biomarker => c.biomarker_inclusion.iter().chain(&c.biomarker_exclusion).collect(),
        };
        for t in texts {
            if !t.trim().is_empty() {
                out.insert(entity_key(t, category, ontology));
            }
        }
    }
    out
}

pub fn set_counts(gold: &BTreeSet<String>, pred: &BTreeSet<String>) -> Counts {
    let tp = gold.intersection(pred).count();
    Counts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EntityOptions<'a> {
    /// Compare ontology codes instead of canonical strings.
    pub normalizer: Option<&'a Ontology>,
    pub averaging: Averaging,
}

/// Pairs every gold trial with its prediction (empty when absent).
fn align<'g, 'p>(
    gold: &'g [GoldTrial],
    pred: &'p [StructuredTrial],
) -> EvalResult<Vec<(&'g GoldTrial, Option<&'p StructuredTrial>)>> {
    let mut gold_ids = HashSet::new();
    for g in gold {
        if !gold_ids.insert(g.nct_id.as_str()) {
            return Err(EvalError::DuplicateTrial(g.nct_id.clone(), "gold"));
        }
    }
    let mut by_id: BTreeMap<&str, &StructuredTrial> = BTreeMap::new();
    for p in pred {
        if !gold_ids.contains(p.nct_id.as_str()) {
            return Err(EvalError::MissingGold(p.nct_id.clone()));
        }
        if by_id.insert(p.nct_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicateTrial(p.nct_id.clone(), "predictions"));
        }
    }
    Ok(gold.iter().map(|g| (g, by_id.get(g.nct_id.as_str()).copied())).collect())
}

/// Entity-level scores per category, ignoring the clause structure.
pub fn entity_prf(
    gold: &[GoldTrial],
    pred: &[StructuredTrial],
    options: EntityOptions<'_>,
) -> EvalResult<BTreeMap<EntityCategory, Metrics>> {
    let pairs = align(gold, pred)?;
    let empty = StructuredTrial::default();
    let mut out = BTreeMap::new();
    for cat in EntityCategory::ALL {
        let per_trial: Vec<Counts> = pairs
            .iter()
            .map(|(g, p)| {
                let gs = entity_set(g, cat, options.normalizer);
                let ps = entity_set(p.unwrap_or(&empty), cat, options.normalizer);
                set_counts(&gs, &ps)
            })
            .collect();
        out.insert(cat, aggregate(&per_trial, options.averaging));
    }
    Ok(out)
}

/// Gold disjuncts for a scope: distinct non-empty projections, sorted.
pub fn gold_disjuncts(trial: &GoldTrial, scope: Scope) -> Vec<Conjunction> {
    let set: BTreeSet<Conjunction> = trial
        .canonical_clauses()
        .iter()
        .map(|c| c.project(scope))
        .filter(|c| !c.is_empty())
        .collect();
    set.into_iter().collect()
}

/// Predicted disjuncts for a scope. Clauses that differ only outside the
/// scope collapse to one disjunct, but a clause repeating an earlier clause
/// verbatim contributes an extra copy, so duplicates cost a false positive.
pub fn predicted_disjuncts(trial: &StructuredTrial, scope: Scope) -> Vec<Conjunction> {
    let mut seen_clause = HashSet::new();
    let mut seen_proj = HashSet::new();
    let mut out = Vec::new();
    for c in trial.canonical_clauses() {
        let proj = c.project(scope);
        if proj.is_empty() {
            continue;
        }
        if !seen_clause.insert(c) || seen_proj.insert(proj.clone()) {
            out.push(proj);
        }
    }
    out.sort();
    out
}

/// One-to-one greedy matching on exact equality, in sorted order.
pub fn match_disjuncts(gold: &[Conjunction], pred: &[Conjunction]) -> Counts {
    let mut gold: Vec<&Conjunction> = gold.iter().collect();
    gold.sort();
    let mut pred: Vec<&Conjunction> = pred.iter().collect();
    pred.sort();
    let mut used = vec![false; gold.len()];
    let mut tp = 0;
    for p in &pred {
        if let Some(i) = (0..gold.len()).find(|&i| !used[i] && gold[i] == *p) {
            used[i] = true;
            tp += 1;
        }
    }
    Counts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Disjunction-level scores per scope. Each predicted conjunction must
/// equal a gold conjunction exactly to count.
pub fn dnf_prf(
    gold: &[GoldTrial],
    pred: &[StructuredTrial],
    averaging: Averaging,
) -> EvalResult<BTreeMap<Scope, Metrics>> {
    for g in gold {
        g.validate()?;
    }
    let pairs = align(gold, pred)?;
    let empty = StructuredTrial::default();
    let mut out = BTreeMap::new();
    for scope in Scope::ALL {
        let per_trial: Vec<Counts> = pairs
            .iter()
            .map(|(g, p)| {
                match_disjuncts(&gold_disjuncts(g, scope), &predicted_disjuncts(p.unwrap_or(&empty), scope))
            })
            .collect();
        out.insert(scope, aggregate(&per_trial, averaging));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EnrollmentPair {
    pub patient_id: String,
    pub nct_id: String,
}

/// Matcher eligibility keyed by (patient_id, nct_id).
pub type Verdicts = BTreeMap<(String, String), bool>;

/// Runs the matcher over every patient and trial combination.
pub fn compute_verdicts(matcher: &Matcher<'_>, patients: &[PatientRecord], trials: &[StructuredTrial]) -> Verdicts {
    let mut out = Verdicts::new();
    for p in patients {
        for t in trials {
            let m = matcher.match_trial(t, p);
            out.insert((p.patient_id.clone(), t.nct_id.clone()), m.eligible);
        }
    }
    out
}

/// Verdict table from previously written match results. A repeated pair
/// keeps its last record.
pub fn verdicts_from_records(records: &[MatchRecord]) -> Verdicts {
    records
        .iter()
        .map(|r| ((r.patient_id.clone(), r.nct_id.clone()), r.eligible))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub recall: f64,
    pub matched: usize,
    /// Resolved pairs only.
    pub total: usize,
    /// Pairs whose patient or trial was not in the verdict table.
    pub unresolved: Vec<EnrollmentPair>,
}

/// Fraction of historical enrollments the matcher would have surfaced.
/// Pairs without a verdict are skipped and listed.
pub fn enrollment_recall(pairs: &[EnrollmentPair], verdicts: &Verdicts) -> RecallReport {
    let mut matched = 0;
    let mut total = 0;
    let mut unresolved = Vec::new();
    for pair in pairs {
        match verdicts.get(&(pair.patient_id.clone(), pair.nct_id.clone())) {
            Some(&eligible) => {
                total += 1;
                matched += usize::from(eligible);
            }
            None => {
                log::warn!("enrollment pair {}/{} not resolvable", pair.patient_id, pair.nct_id);
                unresolved.push(pair.clone());
            }
        }
    }
    let recall = if total == 0 { 0.0 } else { matched as f64 / total as f64 };
    RecallReport {
        recall,
        matched,
        total,
        unresolved,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub patient_id: String,
    pub nct_id: String,
    pub selected: bool,
    pub timestamp: DateTime<FixedOffset>,
}

/// Keeps the latest event per (patient, trial); on equal timestamps the one
/// appearing later wins. Output is sorted by key.
pub fn dedup_feedback(events: &[FeedbackEvent]) -> Vec<FeedbackEvent> {
    let mut latest: BTreeMap<(&str, &str), &FeedbackEvent> = BTreeMap::new();
    for e in events {
        let key = (e.patient_id.as_str(), e.nct_id.as_str());
        match latest.get(&key) {
            Some(prev) if prev.timestamp > e.timestamp => {}
            _ => {
                latest.insert(key, e);
            }
        }
    }
    latest.into_values().cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub metrics: Metrics,
    /// Events scored after dedup and skipping.
    pub scored: usize,
    /// Patients with no selected trial; all their events are ignored.
    pub skipped_patients: Vec<String>,
    pub unresolved: Vec<EnrollmentPair>,
}

/// Selected candidates are positives, matcher eligibility is the prediction.
pub fn feedback_prf(events: &[FeedbackEvent], verdicts: &Verdicts) -> FeedbackReport {
    let events = dedup_feedback(events);
    let with_selection: BTreeSet<&str> = events
        .iter()
        .filter(|e| e.selected)
        .map(|e| e.patient_id.as_str())
        .collect();
    let skipped_patients: BTreeSet<String> = events
        .iter()
        .filter(|e| !with_selection.contains(e.patient_id.as_str()))
        .map(|e| e.patient_id.clone())
        .collect();
    let mut counts = Counts::default();
    let mut scored = 0;
    let mut unresolved = Vec::new();
    for e in events.iter().filter(|e| with_selection.contains(e.patient_id.as_str())) {
        let Some(&eligible) = verdicts.get(&(e.patient_id.clone(), e.nct_id.clone())) else {
            log::warn!("feedback event {}/{} not resolvable", e.patient_id, e.nct_id);
            unresolved.push(EnrollmentPair {
                patient_id: e.patient_id.clone(),
                nct_id: e.nct_id.clone(),
            });
            continue;
        };
        scored += 1;
        match (eligible, e.selected) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    FeedbackReport {
        metrics: counts.into(),
        scored,
        skipped_patients: skipped_patients.into_iter().collect(),
        unresolved,
    }
}

impl ComparisonReport {
    /// Entity regime: P/R/F1 for histology and biomarker.
    pub fn entities() -> Self {
        Self::new(
            "Entity extraction",
            EntityCategory::ALL.iter().map(|c| Column::prf(c.label())).collect(),
        )
    }

    /// Disjunction regime: P/R/F1 per scope.
    pub fn dnf() -> Self {
        Self::new("Match logic (DNF)", Scope::ALL.iter().map(|s| Column::prf(s.label())).collect())
    }

    pub fn enrollment() -> Self {
        Self::new("Historical enrollment", vec![Column::recall("Recall")])
    }

    pub fn feedback() -> Self {
        Self::new("Reviewer feedback", vec![Column::prf("Feedback")])
    }

    pub fn push_entities(&mut self, system: &str, scores: &BTreeMap<EntityCategory, Metrics>) -> EvalResult<()> {
        self.push(system, EntityCategory::ALL.iter().map(|c| scores[c]).collect())
    }

    pub fn push_dnf(&mut self, system: &str, scores: &BTreeMap<Scope, Metrics>) -> EvalResult<()> {
        self.push(system, Scope::ALL.iter().map(|s| scores[s]).collect())
    }

    pub fn push_recall(&mut self, system: &str, r: &RecallReport) -> EvalResult<()> {
        self.push(system, vec![Metrics::from_counts(r.matched, 0, r.total - r.matched)])
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> EvalResult<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::EligibilityClause;

    fn clause(h: &str, bi: &[&str]) -> EligibilityClause {
        EligibilityClause {
            histology_inclusion: h.into(),
            biomarker_inclusion: bi.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    fn trial(id: &str, clauses: Vec<EligibilityClause>) -> StructuredTrial {
        StructuredTrial {
            nct_id: id.into(),
            clauses,
        }
    }

    #[test]
    fn zero_denominators() {
        let m = Metrics::from_counts(0, 0, 0);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = Metrics::from_counts(0, 0, 3);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = Metrics::from_counts(0, 2, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_overlap() {
        let g = [trial("NCT00000001", vec![clause("A", &[]), clause("B", &[])])];
        let p = [trial("NCT00000001", vec![clause("B", &[]), clause("C", &[])])];
        let m = entity_prf(&g, &p, EntityOptions::default()).unwrap()[&EntityCategory::Histology];
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn missing_gold_is_error() {
        let g = [trial("NCT00000001", vec![clause("A", &[])])];
        let p = [trial("NCT00000002", vec![clause("A", &[])])];
        assert!(matches!(
            entity_prf(&g, &p, EntityOptions::default()),
            Err(EvalError::MissingGold(id)) if id == "NCT00000002"
        ));
        assert!(matches!(dnf_prf(&g, &p, Averaging::Micro), Err(EvalError::MissingGold(_))));
    }

    #[test]
    fn duplicate_prediction_costs_fp() {
        let g = [trial("NCT00000001", vec![clause("X", &[]), clause("Y", &[])])];
        let p = [trial("NCT00000001", vec![clause("X", &[]), clause("x ", &[])])];
        let m = dnf_prf(&g, &p, Averaging::Micro).unwrap()[&Scope::HistologyBiomarker];
        assert_eq!(m.counts(), Counts { tp: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn scope_projection_collapses_distinct_clauses() {
        let g = [trial("NCT00000001", vec![clause("NSCLC", &["EGFR mutation"]), clause("NSCLC", &["ALK fusion"])])];
        let r = dnf_prf(&g, &g, Averaging::Micro).unwrap();
        assert_eq!(r[&Scope::Histology].counts(), Counts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(r[&Scope::Biomarker].counts(), Counts { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn normalized_entities_use_codes() {
        let ont = Ontology::bundled();
        let g = [trial("NCT00000001", vec![clause("Non-Small Cell Lung Cancer", &["HER2 amplification"])])];
        let p = [trial("NCT00000001", vec![clause("NSCLC", &["ERBB2 amplification"])])];
        let plain = entity_prf(&g, &p, EntityOptions::default()).unwrap();
        assert_eq!(plain[&EntityCategory::Histology].tp, 0);
        let opts = EntityOptions {
            normalizer: Some(&ont),
            averaging: Averaging::Micro,
        };
        let norm = entity_prf(&g, &p, opts).unwrap();
        assert_eq!(norm[&EntityCategory::Histology].tp, 1);
        assert_eq!(norm[&EntityCategory::Biomarker].tp, 1);
    }

    #[test]
    fn macro_differs_from_micro() {
        let g = [
            trial("NCT00000001", vec![clause("A", &[])]),
            trial("NCT00000002", vec![clause("B", &[]), clause("C", &[]), clause("D", &[])]),
        ];
        let p = [
            trial("NCT00000001", vec![clause("A", &[])]),
            trial("NCT00000002", vec![clause("B", &[])]),
        ];
        let micro = dnf_prf(&g, &p, Averaging::Micro).unwrap()[&Scope::Histology];
        let mac = dnf_prf(&g, &p, Averaging::Macro).unwrap()[&Scope::Histology];
        assert_eq!(micro.recall, 0.5);
        assert!((mac.recall - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    fn event(p: &str, t: &str, selected: bool, ts: &str) -> FeedbackEvent {
        FeedbackEvent {
            patient_id: p.into(),
            nct_id: t.into(),
            selected,
            timestamp: DateTime::parse_from_rfc3339(ts).unwrap(),
        }
    }

    #[test]
    fn feedback_latest_wins_and_skips() {
        let events = [
            event("P1", "NCT00000001", false, "2024-01-01T00:00:00Z"),
            event("P1", "NCT00000001", true, "2024-02-01T00:00:00Z"),
            event("P1", "NCT00000002", false, "2024-01-01T00:00:00Z"),
            event("P2", "NCT00000001", false, "2024-01-01T00:00:00Z"),
        ];
        let mut v = Verdicts::new();
        for p in ["P1", "P2"] {
            for t in ["NCT00000001", "NCT00000002"] {
                v.insert((p.into(), t.into()), true);
            }
        }
        let r = feedback_prf(&events, &v);
        assert_eq!(r.metrics.counts(), Counts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(r.skipped_patients, vec!["P2".to_string()]);
        assert_eq!(r.scored, 2);
    }

    #[test]
    fn recall_bounds_and_unresolved() {
        let pairs = vec![
            EnrollmentPair {
                patient_id: "P1".into(),
                nct_id: "NCT00000001".into(),
            },
            EnrollmentPair {
                patient_id: "P9".into(),
                nct_id: "NCT00000001".into(),
            },
        ];
        let mut v = Verdicts::new();
        v.insert(("P1".into(), "NCT00000001".into()), true);
        let r = enrollment_recall(&pairs, &v);
        assert_eq!((r.recall, r.total, r.unresolved.len()), (1.0, 1, 1));
        v.insert(("P1".into(), "NCT00000001".into()), false);
        assert_eq!(enrollment_recall(&pairs, &v).recall, 0.0);
    }
}
