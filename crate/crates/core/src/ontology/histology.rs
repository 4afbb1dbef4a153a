use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OntologyError, OntologyResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistologyConcept {
    pub code: String,
    pub label: String,
    #[serde(default, rename = "parent", skip_serializing_if = "Option::is_none")]
    pub parent_code: Option<String>,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

/// How a "solid tumor" criterion is resolved: a virtual concept that covers
/// every node outside the hematologic subtrees (and below the root).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolidTumorRule {
    pub code: String,
    pub label: String,
    pub synonyms: Vec<String>,
    pub hematologic_roots: BTreeSet<String>,
}

impl Default for SolidTumorRule {
    fn default() -> Self {
        Self {
            code: "SOLID".into(),
            label: "Solid Tumor".into(),
            synonyms: vec![
                "solid tumor".into(),
                "solid tumour".into(),
                "solid malignancy".into(),
                "solid neoplasm".into(),
                "solid cancer".into(),
            ],
            hematologic_roots: ["MYELOID", "LYMPH"].into_iter().map(String::from).collect(),
        }
    }
}

/// Lowercases, strips punctuation other than `-`, `/` and `+`, collapses
/// whitespace and drops a plural `s` from each word.
pub fn normalize_term(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '/' | '+') {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .map(singular)
        .collect::<Vec<_>>()
        .join(" ")
}

fn singular(word: &str) -> &str {
    let bytes = word.as_bytes();
    if bytes.len() > 3
        && word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("is")
        && bytes[..bytes.len() - 1].iter().all(u8::is_ascii_alphabetic)
    {
        &word[..word.len() - 1]
    } else {
        word
    }
}

/// A rooted forest of histology concepts with label and synonym indexes.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    concepts: Vec<HistologyConcept>,
    by_code: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    labels: HashMap<String, Vec<usize>>,
    synonyms: HashMap<String, Vec<usize>>,
    solid: SolidTumorRule,
    // Index of the virtual solid-tumor concept inside `concepts`.
    solid_idx: usize,
}

impl Hierarchy {
    pub fn load(path: &Path) -> OntologyResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| OntologyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> OntologyResult<Self> {
        let concepts: Vec<HistologyConcept> = serde_json::from_str(text)?;
        Self::from_concepts(concepts, SolidTumorRule::default())
    }

    pub fn from_concepts(mut concepts: Vec<HistologyConcept>, solid: SolidTumorRule) -> OntologyResult<Self> {
        let mut by_code = HashMap::new();
        for (i, c) in concepts.iter().enumerate() {
            if by_code.insert(c.code.clone(), i).is_some() {
                return Err(OntologyError::DuplicateCode(c.code.clone()));
            }
        }
        let mut parent = Vec::with_capacity(concepts.len());
        for c in &concepts {
            match &c.parent_code {
                None => parent.push(None),
                Some(p) => match by_code.get(p) {
                    Some(&pi) => parent.push(Some(pi)),
                    None => {
                        return Err(OntologyError::UnknownParent {
                            code: c.code.clone(),
                            parent: p.clone(),
                        })
                    }
                },
            }
        }
        for start in 0..concepts.len() {
            let mut cur = parent[start];
            let mut steps = 0;
            while let Some(p) = cur {
                steps += 1;
                if p == start || steps > concepts.len() {
                    return Err(OntologyError::CycleDetected(concepts[start].code.clone()));
                }
                cur = parent[p];
            }
        }
        if by_code.contains_key(&solid.code) {
            return Err(OntologyError::DuplicateCode(solid.code.clone()));
        }
        for root in &solid.hematologic_roots {
            if !by_code.contains_key(root) {
                return Err(OntologyError::UnknownCode(root.clone()));
            }
        }

        let solid_idx = concepts.len();
        concepts.push(HistologyConcept {
            code: solid.code.clone(),
            label: solid.label.clone(),
            parent_code: None,
            synonyms: solid.synonyms.clone(),
        });
        parent.push(None);
        by_code.insert(solid.code.clone(), solid_idx);

        let mut labels: HashMap<String, Vec<usize>> = HashMap::new();
        let mut synonyms: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, c) in concepts.iter().enumerate() {
            labels.entry(normalize_term(&c.label)).or_default().push(i);
            for s in &c.synonyms {
                let key = normalize_term(s);
                if !key.is_empty() {
                    let slot = synonyms.entry(key).or_default();
                    if !slot.contains(&i) {
                        slot.push(i);
                    }
                }
            }
        }
        Ok(Self {
            concepts,
            by_code,
            parent,
            labels,
            synonyms,
            solid,
            solid_idx,
        })
    }

    /// Concepts from the loaded file (the virtual solid-tumor concept excluded).
    pub fn concepts(&self) -> &[HistologyConcept] {
        &self.concepts[..self.solid_idx]
    }

    pub fn len(&self) -> usize {
        self.solid_idx
    }

    pub fn is_empty(&self) -> bool {
        self.solid_idx == 0
    }

    pub fn get(&self, code: &str) -> Option<&HistologyConcept> {
        self.by_code.get(code).map(|&i| &self.concepts[i])
    }

    pub fn contains(&self, code: &str) -> bool {
        self.by_code.contains_key(code)
    }

    pub fn roots(&self) -> Vec<&HistologyConcept> {
        (0..self.solid_idx)
            .filter(|&i| self.parent[i].is_none())
            .map(|i| &self.concepts[i])
            .collect()
    }

    pub fn solid_tumor_rule(&self) -> &SolidTumorRule {
        &self.solid
    }

    pub fn solid_tumor(&self) -> &HistologyConcept {
        &self.concepts[self.solid_idx]
    }

    /// Codes from `code` up to its root, starting with `code` itself.
    pub fn lineage(&self, code: &str) -> OntologyResult<Vec<&str>> {
        let mut i = *self
            .by_code
            .get(code)
            .ok_or_else(|| OntologyError::UnknownCode(code.to_string()))?;
        let mut out = vec![self.concepts[i].code.as_str()];
        while let Some(p) = self.parent[i] {
            out.push(self.concepts[p].code.as_str());
            i = p;
        }
        Ok(out)
    }

    /// Resolves free text to concepts: exact label, then synonym or code, then
    /// the longest label/synonym contained in the text. Empty when nothing fits.
    pub fn normalize_histology(&self, text: &str) -> Vec<&HistologyConcept> {
        let key = normalize_term(text);
        if key.is_empty() {
            return Vec::new();
        }
        if let Some(hits) = self.labels.get(&key) {
            return self.collect(hits);
        }
        if let Some(hits) = self.synonyms.get(&key) {
            return self.collect(hits);
        }
        if let Some(&i) = self.by_code.get(text.trim()).or_else(|| self.by_code.get(&text.trim().to_uppercase())) {
            return vec![&self.concepts[i]];
        }
        let padded = format!(" {key} ");
        let mut best_len = 0;
        let mut best: Vec<usize> = Vec::new();
        for (term, hits) in self.labels.iter().chain(self.synonyms.iter()) {
            if term.len() < best_len || !padded.contains(&format!(" {term} ")) {
                continue;
            }
            if term.len() > best_len {
                best_len = term.len();
                best.clear();
            }
            for &h in hits {
                if !best.contains(&h) {
                    best.push(h);
                }
            }
        }
        self.collect(&best)
    }

    fn collect(&self, idx: &[usize]) -> Vec<&HistologyConcept> {
        let mut out: Vec<&HistologyConcept> = idx.iter().map(|&i| &self.concepts[i]).collect();
        out.sort_by(|a, b| a.code.cmp(&b.code));
        out.dedup_by(|a, b| a.code == b.code);
        out
    }

    /// True iff `criterion` is `patient` or one of its ancestors. The solid-tumor
    /// concept covers every non-root node outside the hematologic subtrees.
    pub fn subsumes_histology(&self, criterion: &str, patient: &str) -> OntologyResult<bool> {
        if !self.contains(criterion) {
            return Err(OntologyError::UnknownCode(criterion.to_string()));
        }
        let lineage = self.lineage(patient)?;
        if criterion == patient {
            return Ok(true);
        }
        if criterion == self.solid.code {
            let is_root = lineage.len() == 1;
            let hematologic = lineage.iter().any(|c| self.solid.hematologic_roots.contains(*c));
            return Ok(!is_root && !hematologic && patient != self.solid.code);
        }
        Ok(lineage.contains(&criterion))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concept(code: &str, parent: Option<&str>) -> HistologyConcept {
        HistologyConcept {
            code: code.into(),
            label: code.to_lowercase(),
            parent_code: parent.map(String::from),
            synonyms: vec![],
        }
    }

    fn tiny() -> Vec<HistologyConcept> {
        vec![
            concept("TISSUE", None),
            concept("MYELOID", Some("TISSUE")),
            concept("LYMPH", Some("TISSUE")),
        ]
    }

    #[test]
    fn cycle_detected() {
        let mut c = tiny();
        c.push(concept("A", Some("B")));
        c.push(concept("B", Some("A")));
        assert!(matches!(
            Hierarchy::from_concepts(c, SolidTumorRule::default()),
            Err(OntologyError::CycleDetected(_))
        ));
    }

    #[test]
    fn duplicate_code() {
        let mut c = tiny();
        c.push(concept("MYELOID", Some("TISSUE")));
        assert!(matches!(
            Hierarchy::from_concepts(c, SolidTumorRule::default()),
            Err(OntologyError::DuplicateCode(_))
        ));
    }

    #[test]
    fn unknown_parent() {
        let mut c = tiny();
        c.push(concept("X", Some("NOPE")));
        assert!(matches!(
            Hierarchy::from_concepts(c, SolidTumorRule::default()),
            Err(OntologyError::UnknownParent { .. })
        ));
    }

    #[test]
    fn term_normalization() {
        assert_eq!(normalize_term("  Solid Tumors, "), "solid tumor");
        assert_eq!(normalize_term("Non-Small Cell Lung Cancer"), "non-small cell lung cancer");
        assert_eq!(normalize_term("CNS/Brain"), "cns/brain");
        assert_eq!(normalize_term("metastasis"), "metastasis");
    }
}
