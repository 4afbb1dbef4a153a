use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};

use super::{ExtractionError, ExtractionResult};
use crate::ingest::{section_header, CriteriaSection, TrialDoc};
use crate::logic::{EligibilityClause, StructuredTrial};
use crate::ontology::{parse_biomarker, Hierarchy};

/// Default recognizers for biomarker mentions. Gene-bearing patterns are
/// checked with the biomarker parser before a hit is kept.
const DEFAULT_BIOMARKER_PATTERNS: &[&str] = &[
    // gene + protein change: "EGFR L858R", "BRAF V600E/K", "EGFR E746_A750del"
    r"\b[A-Z][A-Z0-9]{1,7}\s+(?:p\.)?[A-Z]\d{1,4}(?:_[A-Z]\d{1,4})?(?:[A-Z*]|del|ins|dup|fs)?(?:/[A-Z])*\b",
    // gene + exon: "EGFR exon 19 deletion"
    r"\b[A-Z][A-Z0-9]{1,7}\s+exon\s+\d{1,3}\s+(?:deletions?|insertions?|mutations?|skipping|alterations?)",
    // gene + alteration word: "KRAS mutation", "EML4-ALK fusion", "ERBB2 amplification"
    r"\b[A-Z][A-Z0-9]{1,7}(?:-[A-Z0-9]{2,8})?\s+(?:gene\s+)?(?:mutations?|amplifications?|fusions?|rearrangements?|alterations?|deletions?|mutant|mutated|overexpression|wild[- ]type)\b",
    // phenotypes
    r"(?i)\b(?:msi-h|msi-high|microsatellite instability[- ]high|dmmr|mismatch repair[- ]deficient|deficient mismatch repair|tmb-h|tmb-high|high tumor mutational burden)\b",
    r"(?i)\bpd-l1\s+(?:positive|expression|negative)\b",
    r"\bHER2[- ](?:positive|negative|amplified)\b",
    r"(?i)\b1p/19q[- ]co-?deletion\b",
];

/// Gene lists sharing one alteration word: "RAS, NF1, or RAF mutations".
const GENE_LIST_PATTERN: &str = r"\b((?:[A-Z][A-Z0-9]{1,7},\s*)+(?:[A-Z][A-Z0-9]{1,7},?\s+)?(?:or|and)\s+[A-Z][A-Z0-9]{1,7})\s+(mutations?|alterations?|fusions?|amplifications?)\b";

/// Protein change without a gene; attached to the last gene seen on the line.
const BARE_CHANGE_PATTERN: &str = r"\b[A-Z]\d{2,4}[A-Z]\b";

/// Dictionary of histology terms and biomarker recognizers.
#[derive(Debug, Clone)]
pub struct Lexicon {
    /// Lowercase term → ontology code.
    pub histology_terms: BTreeMap<String, String>,
    pub biomarker_patterns: Vec<String>,
    histology_re: Regex,
    biomarker_res: Vec<Regex>,
}

impl Lexicon {
    pub fn new(histology_terms: BTreeMap<String, String>, biomarker_patterns: Vec<String>) -> ExtractionResult<Self> {
        if histology_terms.is_empty() {
            return Err(ExtractionError::LexiconMissing);
        }
        let histology_terms: BTreeMap<String, String> = histology_terms
            .into_iter()
            .map(|(k, v)| (k.trim().to_lowercase(), v))
            .filter(|(k, _)| !k.is_empty())
            .collect();
        let mut terms: Vec<&String> = histology_terms.keys().collect();
        // Longer terms first so the leftmost match is also the longest.
        terms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alternation = terms.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join("|");
        let pattern = format!(r"\b(?:{alternation})s?\b");
        let histology_re = RegexBuilder::new(&pattern)
            .case_insensitive(true)
            .size_limit(1 << 24)
            .build()
            .map_err(|e| ExtractionError::InvalidPattern {
                pattern: "histology terms".into(),
                message: e.to_string(),
            })?;
        let biomarker_res = biomarker_patterns
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|e| ExtractionError::InvalidPattern {
                    pattern: p.clone(),
                    message: e.to_string(),
                })
            })
            .collect::<ExtractionResult<Vec<_>>>()?;
        Ok(Self {
            histology_terms,
            biomarker_patterns,
            histology_re,
            biomarker_res,
        })
    }

    /// Terms from concept labels and synonyms, plus the default biomarker
    /// recognizers. Tissue-level labels ("Lung", "Skin") are left out since
    /// they mostly name organs rather than diagnoses; their synonyms stay.
    pub fn from_hierarchy(h: &Hierarchy) -> ExtractionResult<Self> {
        let roots: Vec<&str> = h.roots().iter().map(|c| c.code.as_str()).collect();
        let mut terms = BTreeMap::new();
        let solid = h.solid_tumor();
        for c in h.concepts().iter().chain(std::iter::once(solid)) {
            let tissue_level = c.parent_code.as_deref().is_none_or(|p| roots.contains(&p));
            let is_solid = c.code == solid.code;
            if is_solid || !tissue_level {
                terms.entry(c.label.to_lowercase()).or_insert_with(|| c.code.clone());
            }
            for s in &c.synonyms {
                terms.entry(s.to_lowercase()).or_insert_with(|| c.code.clone());
            }
        }
        Self::new(terms, DEFAULT_BIOMARKER_PATTERNS.iter().map(|s| s.to_string()).collect())
    }

    /// Histology mentions as (surface text, code), longest non-overlapping first-left.
    pub fn find_histologies(&self, line: &str) -> Vec<(String, String)> {
        self.histology_re
            .find_iter(line)
            .filter_map(|m| {
                let surface = m.as_str();
                let key = surface.to_lowercase();
                let code = self
                    .histology_terms
                    .get(&key)
                    .or_else(|| key.strip_suffix('s').and_then(|k| self.histology_terms.get(k)))?;
                Some((surface.to_string(), code.clone()))
            })
            .collect()
    }

    /// Biomarker mentions on one line, in order of appearance.
    pub fn find_biomarkers(&self, line: &str) -> Vec<String> {
        static LIST: OnceLock<Regex> = OnceLock::new();
        static BARE: OnceLock<Regex> = OnceLock::new();
        let list = LIST.get_or_init(|| Regex::new(GENE_LIST_PATTERN).unwrap());
        let bare = BARE.get_or_init(|| Regex::new(BARE_CHANGE_PATTERN).unwrap());

        // (start, end, texts)
        let mut hits: Vec<(usize, usize, Vec<String>)> = Vec::new();
        for caps in list.captures_iter(line) {
            let whole = caps.get(0).unwrap();
            let word = caps[2].trim_end_matches('s').to_string();
            let genes: Vec<String> = caps[1]
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|g| !g.is_empty() && *g != "or" && *g != "and")
                .map(|g| format!("{g} {word}"))
                .filter(|t| parse_biomarker(t).is_ok())
                .collect();
            if !genes.is_empty() {
                hits.push((whole.start(), whole.end(), genes));
            }
        }
        for re in &self.biomarker_res {
            for m in re.find_iter(line) {
                let text = m.as_str().trim().to_string();
                if parse_biomarker(&text).is_ok() {
                    hits.push((m.start(), m.end(), vec![text]));
                }
            }
        }
        hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut kept: Vec<(usize, usize, Vec<String>)> = Vec::new();
        for h in hits {
            if kept.iter().all(|k| h.0 >= k.1 || h.1 <= k.0) {
                kept.push(h);
            }
        }
        // Bare protein changes ("... or L858R") borrow the nearest preceding gene.
        for m in bare.find_iter(line) {
            if kept.iter().any(|k| m.start() < k.1 && m.end() > k.0) {
                continue;
            }
            let gene = kept
                .iter()
                .filter(|k| k.1 <= m.start())
                .filter_map(|k| k.2.last())
                .filter_map(|t| parse_biomarker(t).ok()?.gene)
                .next_back();
            if let Some(g) = gene {
                kept.push((m.start(), m.end(), vec![format!("{g} {}", m.as_str())]));
            }
        }
        kept.sort_by_key(|k| k.0);
        kept.into_iter().flat_map(|k| k.2).collect()
    }
}

fn disease_state_terms(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\b(locally advanced|advanced|metastatic|recurrent|relapsed|refractory|unresectable|stage\s+(?:iv|iii|ii|i)[abc]?)\b")
            .unwrap()
    });
    let mut out: Vec<String> = Vec::new();
    for m in re.find_iter(text) {
        let t = m.as_str().to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn is_negated_mention(line: &str, start: usize) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b(no|without|negative for|absence of|not have)\b[^.;]{0,30}$").unwrap());
    re.is_match(&line[..start])
}

fn push_unique(list: &mut Vec<String>, item: String) {
    if !list.iter().any(|x| x.eq_ignore_ascii_case(&item)) {
        list.push(item);
    }
}

/// Dictionary/pattern structuring of a trial's criteria text.
///
/// Lines under an exclusion header feed the exclusion lists; everything
/// else counts as inclusion. Each inclusion histology yields one clause
/// carrying every inclusion biomarker, the exclusions and the disease state.
pub fn baseline_extract(trial: &TrialDoc, lexicon: &Lexicon) -> ExtractionResult<StructuredTrial> {
    if lexicon.histology_terms.is_empty() {
        return Err(ExtractionError::LexiconMissing);
    }
    let mut section = CriteriaSection::Inclusion;
    let mut hist_inc: Vec<String> = Vec::new();
    let mut bio_inc: Vec<String> = Vec::new();
    let mut hist_exc: Vec<String> = Vec::new();
    let mut bio_exc: Vec<String> = Vec::new();
    let mut inclusion_text = String::new();

    for line in trial.criteria_text.lines() {
        if let Some(s) = section_header(line) {
            section = s;
        }
        let inclusion = section == CriteriaSection::Inclusion;
        if inclusion {
            inclusion_text.push_str(line);
            inclusion_text.push('\n');
        }
        for (surface, _code) in lexicon.find_histologies(line) {
            if inclusion {
                push_unique(&mut hist_inc, surface);
            } else {
                push_unique(&mut hist_exc, surface);
            }
        }
        for text in lexicon.find_biomarkers(line) {
            let start = line.find(text.split_whitespace().next().unwrap_or("")).unwrap_or(0);
            // "no known EGFR mutation" under inclusion reads as an exclusion.
            if inclusion && !is_negated_mention(line, start) {
                push_unique(&mut bio_inc, text);
            } else {
                push_unique(&mut bio_exc, text);
            }
        }
    }

    let disease_state = disease_state_terms(&inclusion_text).join(" or ");
    let clauses: Vec<EligibilityClause> = hist_inc
        .into_iter()
        .map(|h| EligibilityClause {
            cohort: String::new(),
            disease_state: disease_state.clone(),
            histology_inclusion: h,
            biomarker_inclusion: bio_inc.clone(),
            histology_exclusion: hist_exc.clone(),
            biomarker_exclusion: bio_exc.clone(),
        })
        .collect();
    let structured = StructuredTrial::from_clauses(&trial.nct_id, clauses);
    if structured.clauses.is_empty() {
        return Err(ExtractionError::EmptyExtraction(trial.nct_id.clone()));
    }
    Ok(structured)
}
