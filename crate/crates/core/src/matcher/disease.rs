use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MatchError, MatchResult as Result};

/// Maps each criterion term to the patient descriptors that satisfy it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiseaseStateTable {
    pub terms: BTreeMap<String, BTreeSet<String>>,
}

impl Default for DiseaseStateTable {
    fn default() -> Self {
        let entries: &[(&str, &[&str])] = &[
            ("advanced", &["advanced", "locally advanced", "metastatic", "stage iv"]),
            ("locally advanced", &["locally advanced", "advanced", "stage iii"]),
            ("metastatic", &["metastatic", "stage iv"]),
            ("recurrent", &["recurrent", "relapsed"]),
            ("relapsed", &["relapsed", "recurrent"]),
            ("refractory", &["refractory"]),
            ("unresectable", &["unresectable"]),
            ("progressive", &["progressive", "refractory"]),
            ("stage i", &["stage i"]),
            ("stage ii", &["stage ii"]),
            ("stage iii", &["stage iii"]),
            ("stage iv", &["stage iv", "metastatic"]),
        ];
        Self {
            terms: entries
                .iter()
                .map(|(k, vs)| (k.to_string(), vs.iter().map(|v| v.to_string()).collect()))
                .collect(),
        }
    }
}

/// Outcome of checking one disease-state criterion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiseaseOutcome {
    /// Criterion text was empty.
    Empty,
    Satisfied(String),
    Unsatisfied(String),
    /// No known term in the criterion.
    Unresolved,
}

impl DiseaseStateTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| MatchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut table: Self = serde_json::from_str(&text).map_err(|e| MatchError::InvalidConfig(e.to_string()))?;
        table.terms = table
            .terms
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.into_iter().map(|d| d.to_lowercase()).collect()))
            .collect();
        Ok(table)
    }

    /// Known terms inside `piece`, longest first and non-overlapping.
    fn terms_in(&self, piece: &str) -> Vec<&str> {
        let mut keys: Vec<&String> = self.terms.keys().collect();
        keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let mut rest = format!(" {piece} ");
        let mut found = Vec::new();
        for k in keys {
            let needle = format!(" {k} ");
            if rest.contains(&needle) {
                found.push(k.as_str());
                rest = rest.replace(&needle, "  ");
            }
        }
        found
    }

    /// Criterion alternatives are split on "or", commas and slashes; within an
    /// alternative, terms joined by "and" must all hold. A bare Roman numeral
    /// after a stage term ("stage III or IV") is read as a stage.
    pub fn evaluate(&self, criterion: &str, patient_terms: &BTreeSet<String>) -> DiseaseOutcome {
        let text: String = criterion
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '/' || c == ',' { c } else { ' ' })
            .collect();
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return DiseaseOutcome::Empty;
        }
        let mut any_resolved = false;
        let mut saw_stage = false;
        for alt in text.split([',', '/']).flat_map(|p| p.split(" or ")) {
            let alt = alt.trim();
            if alt.is_empty() {
                continue;
            }
            let mut conjuncts: Vec<String> = Vec::new();
            let mut resolved = true;
            for part in alt.split(" and ") {
                let part = part.trim();
                let mut terms: Vec<String> = self.terms_in(part).into_iter().map(String::from).collect();
                if terms.is_empty() && saw_stage && matches!(part, "i" | "ii" | "iii" | "iv") {
                    terms.push(format!("stage {part}"));
                }
                if terms.is_empty() {
                    resolved = false;
                }
                saw_stage |= terms.iter().any(|t| t.starts_with("stage "));
                conjuncts.extend(terms);
            }
            if !resolved || conjuncts.is_empty() {
                continue;
            }
            any_resolved = true;
            let ok = conjuncts.iter().all(|t| {
                self.terms
                    .get(t)
                    .is_some_and(|accepted| accepted.iter().any(|a| patient_terms.contains(a)))
            });
            if ok {
                return DiseaseOutcome::Satisfied(format!("patient disease state satisfies \"{alt}\""));
            }
        }
        if any_resolved {
            DiseaseOutcome::Unsatisfied(format!(
                "patient disease state {:?} does not satisfy \"{}\"",
                patient_terms.iter().collect::<Vec<_>>(),
                criterion.trim()
            ))
        } else {
            DiseaseOutcome::Unresolved
        }
    }
}
