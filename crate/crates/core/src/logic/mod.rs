//! Eligibility logic: DNF clause model, boolean normalization and canonical forms.
//!
//! A [`StructuredTrial`] is a disjunction of [`EligibilityClause`]s; each clause
//! is a conjunction of one histology, all listed inclusion biomarkers, a
//! disease-state requirement, and the negation of every exclusion atom.

mod dnf;
mod json;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dnf::{to_dnf, to_dnf_with_cap, Atom, AtomCategory, BoolExpr, Conjunction, Literal, DEFAULT_DNF_CAP};
pub use json::{parse_extractor_json, ParsedClauses};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("DNF expansion exceeds the cap of {cap} conjunctions")]
    ExpansionLimitExceeded { cap: usize },

    #[error("no JSON array found in extractor output")]
    NoJsonFound,

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("conjunction cannot be expressed as an eligibility clause: {0}")]
    ClauseShape(String),

    #[error("invalid expression: {0}")]
    InvalidExpression(String),
}

pub type LogicResult<T> = Result<T, LogicError>;

/// One conjunctive clause of a trial's eligibility disjunction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EligibilityClause {
    #[serde(default)]
    pub cohort: String,
    #[serde(default)]
    pub disease_state: String,
    #[serde(default)]
    pub histology_inclusion: String,
    #[serde(default)]
    pub biomarker_inclusion: Vec<String>,
    #[serde(default)]
    pub histology_exclusion: Vec<String>,
    #[serde(default)]
    pub biomarker_exclusion: Vec<String>,
}

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize_atom(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl EligibilityClause {
    pub fn canonical(&self) -> CanonicalClause {
        canonicalize(self)
    }

    /// Clause rewritten with normalized text and sorted, de-duplicated lists.
    pub fn canonical_form(&self) -> EligibilityClause {
        let c = canonicalize(self);
        EligibilityClause {
            cohort: self.cohort.trim().to_string(),
            ..c.to_clause()
        }
    }

    /// Removes exclusion atoms that also appear (canonically) as inclusion atoms.
    /// Returns the removed atoms.
    pub fn remove_contradictions(&mut self) -> Vec<String> {
        let mut removed = Vec::new();
        let hist = normalize_atom(&self.histology_inclusion);
        self.histology_exclusion.retain(|a| {
            let keep = normalize_atom(a) != hist;
            if !keep {
                removed.push(a.clone());
            }
            keep
        });
        let inc: HashSet<String> = self.biomarker_inclusion.iter().map(|a| normalize_atom(a)).collect();
        self.biomarker_exclusion.retain(|a| {
            let keep = !inc.contains(&normalize_atom(a));
            if !keep {
                removed.push(a.clone());
            }
            keep
        });
        removed
    }

    /// Checks the clause-level invariants.
    pub fn validate(&self) -> LogicResult<()> {
        if self.histology_inclusion.trim().is_empty() {
            return Err(LogicError::ClauseShape("histology_inclusion is empty".into()));
        }
        let mut probe = self.clone();
        let removed = probe.remove_contradictions();
        if !removed.is_empty() {
            return Err(LogicError::ClauseShape(format!(
                "atoms both included and excluded: {removed:?}"
            )));
        }
        Ok(())
    }

    /// The clause as a conjunction of tagged literals.
    pub fn to_conjunction(&self) -> Conjunction {
        self.canonical().to_conjunction()
    }

    /// Number of atoms the clause constrains.
    pub fn atom_count(&self) -> usize {
        usize::from(!self.histology_inclusion.trim().is_empty())
            + usize::from(!self.disease_state.trim().is_empty())
            + self.biomarker_inclusion.len()
            + self.histology_exclusion.len()
            + self.biomarker_exclusion.len()
    }
}

/// Canonical, order/case/whitespace-insensitive view of a clause.
///
/// The cohort label is not part of clause identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalClause {
    pub disease_state: String,
    pub histology_inclusion: String,
    pub biomarker_inclusion: BTreeSet<String>,
    pub histology_exclusion: BTreeSet<String>,
    pub biomarker_exclusion: BTreeSet<String>,
}

pub fn canonicalize(clause: &EligibilityClause) -> CanonicalClause {
    let set = |v: &[String]| -> BTreeSet<String> {
        v.iter().map(|a| normalize_atom(a)).filter(|a| !a.is_empty()).collect()
    };
    CanonicalClause {
        disease_state: normalize_atom(&clause.disease_state),
        histology_inclusion: normalize_atom(&clause.histology_inclusion),
        biomarker_inclusion: set(&clause.biomarker_inclusion),
        histology_exclusion: set(&clause.histology_exclusion),
        biomarker_exclusion: set(&clause.biomarker_exclusion),
    }
}

/// Which atom categories a DNF comparison looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Histology,
    Biomarker,
    HistologyBiomarker,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Histology, Scope::Biomarker, Scope::HistologyBiomarker];

    pub fn label(self) -> &'static str {
        match self {
            Scope::Histology => "Histology",
            Scope::Biomarker => "Biomarker",
            Scope::HistologyBiomarker => "Histology+Biomarker",
        }
    }
}

impl CanonicalClause {
    pub fn to_clause(&self) -> EligibilityClause {
        EligibilityClause {
            cohort: String::new(),
            disease_state: self.disease_state.clone(),
            histology_inclusion: self.histology_inclusion.clone(),
            biomarker_inclusion: self.biomarker_inclusion.iter().cloned().collect(),
            histology_exclusion: self.histology_exclusion.iter().cloned().collect(),
            biomarker_exclusion: self.biomarker_exclusion.iter().cloned().collect(),
        }
    }

    pub fn to_conjunction(&self) -> Conjunction {
        self.project(Scope::HistologyBiomarker)
    }

    /// Restricts the clause to the literals of one scope. Disease state only
    /// takes part in the combined scope.
    pub fn project(&self, scope: Scope) -> Conjunction {
        let mut lits = BTreeSet::new();
        let hist = matches!(scope, Scope::Histology | Scope::HistologyBiomarker);
        let bio = matches!(scope, Scope::Biomarker | Scope::HistologyBiomarker);
        if hist {
            if !self.histology_inclusion.is_empty() {
                lits.insert(Literal::pos(AtomCategory::Histology, &self.histology_inclusion));
            }
            for a in &self.histology_exclusion {
                lits.insert(Literal::neg(AtomCategory::Histology, a));
            }
        }
        if bio {
            for a in &self.biomarker_inclusion {
                lits.insert(Literal::pos(AtomCategory::Biomarker, a));
            }
            for a in &self.biomarker_exclusion {
                lits.insert(Literal::neg(AtomCategory::Biomarker, a));
            }
        }
        if scope == Scope::HistologyBiomarker && !self.disease_state.is_empty() {
            lits.insert(Literal::pos(AtomCategory::DiseaseState, &self.disease_state));
        }
        Conjunction(lits)
    }
}

/// Converts DNF conjunctions back to eligibility clauses.
///
/// Conjunctions without a positive histology literal are dropped, matching the
/// retention rule for clauses.
pub fn clauses_from_dnf(conjunctions: &[Conjunction]) -> LogicResult<Vec<EligibilityClause>> {
    let mut out = Vec::new();
    for conj in conjunctions {
        let mut clause = EligibilityClause::default();
        let mut states = Vec::new();
        for lit in conj.iter() {
            match (lit.atom.category, lit.negated) {
                (AtomCategory::Histology, false) => {
                    if !clause.histology_inclusion.is_empty() {
                        return Err(LogicError::ClauseShape(format!(
                            "more than one histology in {conj}"
                        )));
                    }
                    clause.histology_inclusion = lit.atom.text.clone();
                }
                (AtomCategory::Histology, true) => clause.histology_exclusion.push(lit.atom.text.clone()),
                (AtomCategory::Biomarker, false) => clause.biomarker_inclusion.push(lit.atom.text.clone()),
                (AtomCategory::Biomarker, true) => clause.biomarker_exclusion.push(lit.atom.text.clone()),
                (AtomCategory::DiseaseState, false) => states.push(lit.atom.text.clone()),
                (AtomCategory::DiseaseState, true) | (AtomCategory::Other, _) => {
                    return Err(LogicError::ClauseShape(format!("unsupported literal {lit}")))
                }
            }
        }
        if clause.histology_inclusion.is_empty() {
            continue;
        }
        clause.disease_state = states.join(" and ");
        out.push(clause);
    }
    Ok(out)
}

/// A trial's structured eligibility: patient eligible iff any clause holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredTrial {
    pub nct_id: String,
    #[serde(default)]
    pub clauses: Vec<EligibilityClause>,
}

impl StructuredTrial {
    /// Builds a trial keeping only clauses with a histology, with
    /// contradictions removed and canonical duplicates dropped (first wins).
    pub fn from_clauses(nct_id: impl Into<String>, clauses: Vec<EligibilityClause>) -> Self {
        let mut seen = HashSet::new();
        let clauses = clauses
            .into_iter()
            .filter(|c| !c.histology_inclusion.trim().is_empty())
            .map(|mut c| {
                c.remove_contradictions();
                c
            })
            .filter(|c| seen.insert(c.canonical()))
            .collect();
        Self {
            nct_id: nct_id.into(),
            clauses,
        }
    }

    pub fn validate(&self) -> LogicResult<()> {
        let mut seen = HashSet::new();
        for (i, c) in self.clauses.iter().enumerate() {
            c.validate()
                .map_err(|e| LogicError::SchemaViolation(format!("{} clause {i}: {e}", self.nct_id)))?;
            if !seen.insert(c.canonical()) {
                return Err(LogicError::SchemaViolation(format!(
                    "{} clause {i} duplicates an earlier clause",
                    self.nct_id
                )));
            }
        }
        Ok(())
    }

    pub fn canonical_clauses(&self) -> Vec<CanonicalClause> {
        self.clauses.iter().map(canonicalize).collect()
    }
}
