use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{MatchError, MatchResult as Result};
use crate::ontology::{AlterationKind, Biomarker, BiomarkerLevel, Ontology, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(alias = "cps")]
    CPS,
    #[serde(alias = "tps")]
    TPS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdL1 {
    pub score_kind: ScoreKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub unit: String,
}

/// Structured patient information as produced by upstream record abstraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    #[serde(default)]
    pub birth_date: Option<NaiveDate>,
    #[serde(default)]
    pub gender: String,
    #[serde(default)]
    pub tumor_site: String,
    /// Histology concept code.
    pub histology: String,
    #[serde(default)]
    pub stage: String,
    /// Lowercase descriptors such as "metastatic" or "recurrent".
    #[serde(default)]
    pub disease_descriptors: BTreeSet<String>,
    /// Given as text ("KRAS G12C") or as structured objects.
    #[serde(default)]
    pub biomarkers: Vec<Biomarker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd_l1: Option<PdL1>,
    #[serde(default)]
    pub medications: Vec<String>,
    #[serde(default)]
    pub labs: Vec<Lab>,
    /// Free-text pathology report, used only by direct matching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pathology_report: Option<String>,
}

impl PatientRecord {
    /// Checks the histology code against the loaded hierarchy.
    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        if self.patient_id.trim().is_empty() {
            return Err(MatchError::InvalidPatient("empty patient_id".into()));
        }
        if !ontology.histology.contains(&self.histology) {
            return Err(MatchError::InvalidPatient(format!(
                "{}: histology code {:?} not in hierarchy",
                self.patient_id, self.histology
            )));
        }
        Ok(())
    }

    pub fn birth_year(&self) -> Option<i32> {
        self.birth_date.map(|d| d.year())
    }

    /// Recorded biomarkers plus a PD-L1 phenotype derived from the score
    /// (positive at 1 or above).
    pub fn effective_biomarkers(&self) -> Vec<Biomarker> {
        let mut out = self.biomarkers.clone();
        if let Some(p) = &self.pd_l1 {
            let derived = Biomarker {
                gene: None,
                level: BiomarkerLevel::Phenotype,
                detail: "PD-L1".into(),
                alteration_kind: AlterationKind::Expression,
                polarity: if p.value >= 1.0 {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                },
            };
            if !out.contains(&derived) {
                out.push(derived);
            }
        }
        out
    }

    /// Descriptors plus "stage <roman>" derived from the stage field.
    pub fn disease_terms(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .disease_descriptors
            .iter()
            .map(|d| d.trim().to_lowercase())
            .filter(|d| !d.is_empty())
            .collect();
        if let Some(r) = stage_roman(&self.stage) {
            out.insert(format!("stage {r}"));
        }
        out
    }

    /// Plain-text rendering for the direct-match prompt.
    pub fn bundle_text(&self, ontology: &Ontology) -> String {
        let label = ontology
            .histology
            .get(&self.histology)
            .map(|c| c.label.as_str())
            .unwrap_or(self.histology.as_str());
        let mut meta = Vec::new();
        if !self.gender.is_empty() {
            meta.push(self.gender.clone());
        }
        if let Some(d) = self.birth_date {
            meta.push(format!("born {d}"));
        }
        meta.push(label.to_string());
        if !self.tumor_site.is_empty() {
            meta.push(format!("tumor site {}", self.tumor_site));
        }
        if !self.stage.is_empty() {
            meta.push(format!("stage {}", self.stage));
        }
        meta.extend(self.disease_descriptors.iter().cloned());
        if let Some(p) = &self.pd_l1 {
            meta.push(format!("PD-L1 {:?} {}", p.score_kind, p.value));
        }
        for m in &self.medications {
            meta.push(format!("medication {m}"));
        }
        for l in &self.labs {
            meta.push(format!("{} {} {}", l.name, l.value, l.unit).trim_end().to_string());
        }
        let mutations: Vec<String> = self.biomarkers.iter().map(ToString::to_string).collect();
        let mut out = format!("Patient Metadata:\n{}\n", meta.join(",\n"));
        out.push_str(&format!("Patient Mutations:\n{}\n", mutations.join("\n")));
        out.push_str(&format!("Pathology Metadata:\nOncotree Code {}\n", self.histology));
        if let Some(r) = &self.pathology_report {
            out.push_str(&format!("Patient Pathology Report:\n{}\n", r.trim_end()));
        }
        out
    }
}

/// Main Roman numeral of a stage such as "IIIA" or "Stage IV", lowercase.
pub fn stage_roman(stage: &str) -> Option<&'static str> {
    let s = stage.trim().to_lowercase();
    let s = s.strip_prefix("stage").unwrap_or(&s).trim();
    let roman: String = s.chars().take_while(|c| matches!(c, 'i' | 'v')).collect();
    match roman.as_str() {
        "i" => Some("i"),
        "ii" => Some("ii"),
        "iii" => Some("iii"),
        "iv" => Some("iv"),
        _ => None,
    }
}

/// Reads one patient per line.
pub fn load_patients(path: &Path) -> Result<Vec<PatientRecord>> {
    let text = fs::read_to_string(path).map_err(|source| MatchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MatchError::InvalidPatient(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
