//! Registry XML ingestion.
//!
//! Turns a ClinicalTrials.gov `<clinical_study>` export into a [`TrialDoc`],
//! decides whether the study is an oncology treatment trial, and prepares the
//! eligibility text that is handed to an extractor.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::Event;
use quick_xml::Reader;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),

    #[error("trial XML has no nct_id element")]
    MissingIdentifier,

    #[error("invalid registry identifier {0:?}: expected NCT followed by 8 digits")]
    InvalidIdentifier(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type IngestResult<T> = Result<T, IngestError>;

/// One `<arm_group>` of a registry record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmGroup {
    pub label: String,
    #[serde(rename = "type")]
    pub group_type: String,
    pub description: String,
}

/// Raw trial fields as exported by the registry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialDoc {
    pub nct_id: String,
    pub brief_title: String,
    pub official_title: String,
    pub brief_summary: String,
    #[serde(default)]
    pub conditions: Vec<String>,
    #[serde(default)]
    pub primary_purpose: String,
    #[serde(default)]
    pub study_type: String,
    #[serde(default)]
    pub arm_groups: Vec<ArmGroup>,
    /// Eligibility section with its original line breaks.
    #[serde(default)]
    pub criteria_text: String,
}

/// Checks the `NCT` + 8 digits registry identifier shape.
pub fn is_valid_nct_id(id: &str) -> bool {
    id.len() == 11 && id.starts_with("NCT") && id[3..].bytes().all(|b| b.is_ascii_digit())
}

/// Which studies count as oncology treatment trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFilter {
    pub primary_purpose: String,
    pub study_type: String,
    pub disease_keywords: Vec<String>,
    /// Case-insensitive patterns for criteria lines that carry no histology or
    /// biomarker information.
    #[serde(default = "default_irrelevant_line_patterns")]
    pub irrelevant_line_patterns: Vec<String>,
}

impl Default for IngestFilter {
    fn default() -> Self {
        Self {
            primary_purpose: "Treatment".into(),
            study_type: "Interventional".into(),
            disease_keywords: [
                "cancer", "tumor", "carcinoma", "lymphoma", "leukemia", "melanoma", "sarcoma",
                "glioma", "myeloma", "neoplasm",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            irrelevant_line_patterns: default_irrelevant_line_patterns(),
        }
    }
}

fn default_irrelevant_line_patterns() -> Vec<String> {
    [
        r"life expectancy",
        r"written (informed )?consent|informed consent",
        r"pregnan",
        r"contracepti",
        r"adequate (bone marrow|liver|hepatic|renal|kidney|organ)",
        r"bone marrow, liver,? and renal function",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

impl IngestFilter {
    pub fn load(path: &Path) -> IngestResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let filter: Self = serde_json::from_str(&text)?;
        filter.validate()?;
        Ok(filter)
    }

    pub fn validate(&self) -> IngestResult<()> {
        if self.disease_keywords.is_empty() {
            return Err(IngestError::InvalidFilter(
                "disease_keywords must not be empty".into(),
            ));
        }
        self.line_matchers()?;
        Ok(())
    }

    fn line_matchers(&self) -> IngestResult<Vec<Regex>> {
        self.irrelevant_line_patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| IngestError::InvalidFilter(format!("pattern {p:?}: {e}")))
            })
            .collect()
    }
}

// Element paths (relative to <clinical_study>) we care about.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    NctId,
    BriefTitle,
    OfficialTitle,
    BriefSummary,
    Condition,
    StudyType,
    PrimaryPurpose,
    ArmLabel,
    ArmType,
    ArmDescription,
    Criteria,
}

fn classify(path: &[String]) -> Option<Field> {
    let names: Vec<&str> = path.iter().map(String::as_str).collect();
    match names.as_slice() {
        ["clinical_study", "id_info", "nct_id"] | ["clinical_study", "nct_id"] => {
            Some(Field::NctId)
        }
        ["clinical_study", "brief_title"] => Some(Field::BriefTitle),
        ["clinical_study", "official_title"] => Some(Field::OfficialTitle),
        ["clinical_study", "brief_summary"] | ["clinical_study", "brief_summary", "textblock"] => {
            Some(Field::BriefSummary)
        }
        ["clinical_study", "condition"] => Some(Field::Condition),
        ["clinical_study", "study_type"] => Some(Field::StudyType),
        ["clinical_study", "study_design_info", "primary_purpose"] => Some(Field::PrimaryPurpose),
        ["clinical_study", "arm_group", "arm_group_label"] => Some(Field::ArmLabel),
        ["clinical_study", "arm_group", "arm_group_type"] => Some(Field::ArmType),
        ["clinical_study", "arm_group", "description"] => Some(Field::ArmDescription),
        ["clinical_study", "eligibility", "criteria"]
        | ["clinical_study", "eligibility", "criteria", "textblock"] => Some(Field::Criteria),
        _ => None,
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops leading/trailing blank lines and trailing spaces, keeping inner layout.
fn tidy_block(s: &str) -> String {
    let lines: Vec<&str> = s.lines().map(str::trim_end).collect();
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}

/// Parses one registry XML record.
pub fn parse_trial_xml(xml: &[u8]) -> IngestResult<TrialDoc> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(false);

    let mut doc = TrialDoc::default();
    let mut nct_id: Option<String> = None;
    let mut path: Vec<String> = Vec::new();
    let mut text = String::new();
    let mut saw_root = false;
    let mut buf = Vec::new();

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| IngestError::MalformedXml(format!("at byte {}: {e}", reader.error_position())))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if path.is_empty() {
                    if name != "clinical_study" {
                        return Err(IngestError::MalformedXml(format!(
                            "expected <clinical_study> root, found <{name}>"
                        )));
                    }
                    saw_root = true;
                }
                path.push(name);
                if path.len() == 2 && path[1] == "arm_group" {
                    doc.arm_groups.push(ArmGroup::default());
                }
                text.clear();
            }
            Event::Empty(e) => {
                if path.is_empty() {
                    return Err(IngestError::MalformedXml("empty document root".into()));
                }
                if path.len() == 1 && e.name().as_ref() == b"arm_group" {
                    doc.arm_groups.push(ArmGroup::default());
                }
            }
            Event::Text(t) => {
                let s = t
                    .xml_content()
                    .map_err(|e| IngestError::MalformedXml(e.to_string()))?;
                text.push_str(&s);
            }
            Event::CData(t) => {
                let s = t
                    .xml_content()
                    .map_err(|e| IngestError::MalformedXml(e.to_string()))?;
                text.push_str(&s);
            }
            Event::GeneralRef(r) => {
                if let Some(c) = r
                    .resolve_char_ref()
                    .map_err(|e| IngestError::MalformedXml(e.to_string()))?
                {
                    text.push(c);
                } else {
                    let name = r
                        .decode()
                        .map_err(|e| IngestError::MalformedXml(e.to_string()))?;
                    match resolve_predefined_entity(&name) {
                        Some(v) => text.push_str(v),
                        None => {
                            return Err(IngestError::MalformedXml(format!(
                                "unknown entity &{name};"
                            )))
                        }
                    }
                }
            }
            Event::End(_) => {
                if let Some(field) = classify(&path) {
                    let value = std::mem::take(&mut text);
                    store_field(&mut doc, &mut nct_id, field, &value);
                }
                path.pop();
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    if !saw_root {
        return Err(IngestError::MalformedXml("no <clinical_study> element".into()));
    }
    if !path.is_empty() {
        return Err(IngestError::MalformedXml(format!("unclosed <{}>", path.join("/"))));
    }
    let id = nct_id.ok_or(IngestError::MissingIdentifier)?;
    if !is_valid_nct_id(&id) {
        return Err(IngestError::InvalidIdentifier(id));
    }
    doc.nct_id = id;
    Ok(doc)
}

fn store_field(doc: &mut TrialDoc, nct_id: &mut Option<String>, field: Field, raw: &str) {
    match field {
        Field::NctId => {
            if nct_id.is_none() {
                *nct_id = Some(raw.trim().to_string());
            }
        }
        Field::BriefTitle => doc.brief_title = collapse_ws(raw),
        Field::OfficialTitle => doc.official_title = collapse_ws(raw),
        Field::BriefSummary => {
            // The textblock child and the bare element both land here; keep the non-empty one.
            let v = collapse_ws(raw);
            if !v.is_empty() {
                doc.brief_summary = v;
            }
        }
        Field::Condition => doc.conditions.push(collapse_ws(raw)),
        Field::StudyType => doc.study_type = collapse_ws(raw),
        Field::PrimaryPurpose => doc.primary_purpose = collapse_ws(raw),
        Field::ArmLabel | Field::ArmType | Field::ArmDescription => {
            if let Some(arm) = doc.arm_groups.last_mut() {
                let v = collapse_ws(raw);
                match field {
                    Field::ArmLabel => arm.label = v,
                    Field::ArmType => arm.group_type = v,
                    _ => arm.description = v,
                }
            }
        }
        Field::Criteria => {
            let v = tidy_block(raw);
            if !v.is_empty() {
                doc.criteria_text = v;
            }
        }
    }
}

/// Serializes a [`TrialDoc`] back into registry-shaped XML.
pub fn to_trial_xml(doc: &TrialDoc) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<clinical_study>\n");
    let _ = writeln!(out, "  <id_info>\n    <nct_id>{}</nct_id>\n  </id_info>", escape(&doc.nct_id));
    let _ = writeln!(out, "  <brief_title>{}</brief_title>", escape(&doc.brief_title));
    let _ = writeln!(out, "  <official_title>{}</official_title>", escape(&doc.official_title));
    let _ = writeln!(
        out,
        "  <brief_summary>\n    <textblock>{}</textblock>\n  </brief_summary>",
        escape(&doc.brief_summary)
    );
    let _ = writeln!(out, "  <study_type>{}</study_type>", escape(&doc.study_type));
    let _ = writeln!(
        out,
        "  <study_design_info>\n    <primary_purpose>{}</primary_purpose>\n  </study_design_info>",
        escape(&doc.primary_purpose)
    );
    for c in &doc.conditions {
        let _ = writeln!(out, "  <condition>{}</condition>", escape(c));
    }
    for arm in &doc.arm_groups {
        let _ = writeln!(
            out,
            "  <arm_group>\n    <arm_group_label>{}</arm_group_label>\n    <arm_group_type>{}</arm_group_type>\n    <description>{}</description>\n  </arm_group>",
            escape(&arm.label),
            escape(&arm.group_type),
            escape(&arm.description)
        );
    }
    let _ = writeln!(
        out,
        "  <eligibility>\n    <criteria>\n      <textblock>\n{}\n      </textblock>\n    </criteria>\n  </eligibility>",
        escape(&doc.criteria_text)
    );
    out.push_str("</clinical_study>\n");
    out
}

/// True iff the study's purpose and type match the filter and any disease keyword
/// occurs (case-insensitively) in its titles, summary, conditions or criteria.
pub fn is_oncology_treatment_trial(doc: &TrialDoc, filter: &IngestFilter) -> bool {
    if !doc.primary_purpose.trim().eq_ignore_ascii_case(filter.primary_purpose.trim())
        || !doc.study_type.trim().eq_ignore_ascii_case(filter.study_type.trim())
    {
        return false;
    }
    let haystack = [
        doc.brief_title.as_str(),
        doc.official_title.as_str(),
        doc.brief_summary.as_str(),
        doc.criteria_text.as_str(),
    ]
    .into_iter()
    .chain(doc.conditions.iter().map(String::as_str))
    .map(str::to_lowercase)
    .collect::<Vec<_>>()
    .join("\n");
    filter
        .disease_keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .any(|k| haystack.contains(&k))
}

pub const DEFAULT_MAX_LINES: usize = 40;

/// Drops irrelevant lines, then keeps the first `max_lines` physical lines.
pub fn prepare_criteria_text(doc: &TrialDoc, max_lines: usize, filter: &IngestFilter) -> String {
    let matchers = match filter.line_matchers() {
        Ok(m) => m,
        Err(e) => {
            log::warn!("ignoring irrelevant-line patterns: {e}");
            Vec::new()
        }
    };
    let max_lines = max_lines.max(1);
    doc.criteria_text
        .lines()
        .filter(|line| !matchers.iter().any(|m| m.is_match(line)))
        .take(max_lines)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Collects `*.xml` files from a file or directory argument, sorted by path.
pub fn collect_xml_inputs(input: &Path) -> IngestResult<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = fs::read_dir(input).map_err(|source| IngestError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    Ok(files)
}

/// Outcome of ingesting a file or directory.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub kept: Vec<TrialDoc>,
    pub filtered_out: Vec<String>,
    pub failed: Vec<(PathBuf, String)>,
}

/// Parses, filters and prepares every XML file under `input`.
///
/// Kept documents have their `criteria_text` replaced by the prepared text and
/// are sorted by `nct_id`.
pub fn ingest_path(
    input: &Path,
    filter: Option<&IngestFilter>,
    max_lines: usize,
) -> IngestResult<IngestReport> {
    let default_filter = IngestFilter::default();
    let line_filter = filter.unwrap_or(&default_filter);
    let mut report = IngestReport::default();
    for file in collect_xml_inputs(input)? {
        let bytes = fs::read(&file).map_err(|source| IngestError::Io {
            path: file.clone(),
            source,
        })?;
        let mut doc = match parse_trial_xml(&bytes) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{}: {e}", file.display());
                report.failed.push((file, e.to_string()));
                continue;
            }
        };
        if let Some(f) = filter {
            if !is_oncology_treatment_trial(&doc, f) {
                report.filtered_out.push(doc.nct_id);
                continue;
            }
        }
        doc.criteria_text = prepare_criteria_text(&doc, max_lines, line_filter);
        report.kept.push(doc);
    }
    report.kept.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));
    Ok(report)
}

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        RegexBuilder::new(r"^\s*[-*\d.)\s]*(inclusion|exclusion)\s+criteria\b")
            .case_insensitive(true)
            .build()
            .unwrap()
    })
}

/// Which criteria section a line opens, if it is a section header.
pub fn section_header(line: &str) -> Option<CriteriaSection> {
    header_regex().captures(line).map(|c| {
        if c[1].eq_ignore_ascii_case("exclusion") {
            CriteriaSection::Exclusion
        } else {
            CriteriaSection::Inclusion
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriteriaSection {
    Inclusion,
    Exclusion,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(body: &str) -> String {
        format!("<?xml version=\"1.0\"?>\n<clinical_study>{body}</clinical_study>")
    }

    #[test]
    fn parses_core_fields() {
        let xml = study(
            "<id_info><nct_id>NCT04412629</nct_id></id_info>\
             <brief_title>A  Study</brief_title>\
             <brief_summary><textblock>\n   Summary\n   text.\n</textblock></brief_summary>\
             <eligibility><criteria><textblock>\n  Inclusion Criteria:\n  - Age &gt;= 18\n</textblock></criteria></eligibility>",
        );
        let doc = parse_trial_xml(xml.as_bytes()).unwrap();
        assert_eq!(doc.nct_id, "NCT04412629");
        assert_eq!(doc.brief_title, "A Study");
        assert_eq!(doc.brief_summary, "Summary text.");
        assert_eq!(doc.criteria_text, "  Inclusion Criteria:\n  - Age >= 18");
        assert!(doc.arm_groups.is_empty());
    }

    #[test]
    fn missing_identifier() {
        let xml = study("<brief_title>x</brief_title>");
        assert!(matches!(
            parse_trial_xml(xml.as_bytes()),
            Err(IngestError::MissingIdentifier)
        ));
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(
            parse_trial_xml(b"<clinical_study><brief_title>x</clinical_study>"),
            Err(IngestError::MalformedXml(_))
        ));
        assert!(matches!(
            parse_trial_xml(b"not xml at all"),
            Err(IngestError::MalformedXml(_))
        ));
        assert!(matches!(
            parse_trial_xml(b"<other><nct_id>NCT00000001</nct_id></other>"),
            Err(IngestError::MalformedXml(_))
        ));
    }

    #[test]
    fn prevention_trials_are_not_treatment_trials() {
        let doc = TrialDoc {
            nct_id: "NCT00000001".into(),
            brief_title: "Lung cancer screening".into(),
            primary_purpose: "Prevention".into(),
            study_type: "Interventional".into(),
            ..Default::default()
        };
        assert!(!is_oncology_treatment_trial(&doc, &IngestFilter::default()));
    }

    #[test]
    fn short_criteria_pass_through() {
        let doc = TrialDoc {
            criteria_text: "a\nb\nc\nd\ne".into(),
            ..Default::default()
        };
        assert_eq!(prepare_criteria_text(&doc, 40, &IngestFilter::default()), "a\nb\nc\nd\ne");
        let empty = TrialDoc::default();
        assert_eq!(prepare_criteria_text(&empty, 40, &IngestFilter::default()), "");
    }

    #[test]
    fn boilerplate_lines_are_dropped_before_truncation() {
        let mut lines = vec!["Adequate bone marrow function".to_string()];
        lines.extend((0..40).map(|i| format!("criterion {i}")));
        let doc = TrialDoc {
            criteria_text: lines.join("\n"),
            ..Default::default()
        };
        let out = prepare_criteria_text(&doc, 40, &IngestFilter::default());
        assert_eq!(out.lines().count(), 40);
        assert!(!out.contains("bone marrow"));
        assert!(out.ends_with("criterion 39"));
    }

    #[test]
    fn section_headers() {
        assert_eq!(section_header("EXCLUSION CRITERIA:"), Some(CriteriaSection::Exclusion));
        assert_eq!(section_header("  - INCLUSION CRITERIA:"), Some(CriteriaSection::Inclusion));
        assert_eq!(section_header("Inclusion Criteria:"), Some(CriteriaSection::Inclusion));
        assert_eq!(section_header("patients meeting exclusion"), None);
    }

    #[test]
    fn nct_id_shape() {
        assert!(is_valid_nct_id("NCT04412629"));
        assert!(!is_valid_nct_id("NCT0441262"));
        assert!(!is_valid_nct_id("nct04412629"));
    }
}
