//! Recovery of clause arrays from free-form extractor responses.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::{Map, Value};

use super::{EligibilityClause, LogicError, LogicResult};

const KNOWN_KEYS: [&str; 6] = [
    "cohort",
    "disease_state",
    "histology_inclusion",
    "biomarker_inclusion",
    "histology_exclusion",
    "biomarker_exclusion",
];

/// Clauses recovered from one response plus what was discarded on the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedClauses {
    pub clauses: Vec<EligibilityClause>,
    /// Objects dropped because they had no histology_inclusion.
    pub dropped_without_histology: usize,
    pub warnings: Vec<String>,
}

/// Extracts the first JSON array of clause objects from `text`.
///
/// Code fences and surrounding prose are skipped. When the array is not valid
/// JSON a light repair is attempted (trailing commas, half-quoted or unquoted
/// keys) before giving up.
pub fn parse_extractor_json(text: &str) -> LogicResult<ParsedClauses> {
    let array = find_array(text).ok_or(LogicError::NoJsonFound)?;
    let mut parsed = ParsedClauses::default();
    for (i, item) in array.into_iter().enumerate() {
        let Value::Object(obj) = item else {
            return Err(LogicError::SchemaViolation(format!(
                "array element {i} is not an object"
            )));
        };
        for clause in clause_from_object(i, &obj, &mut parsed.warnings) {
            if clause.histology_inclusion.trim().is_empty() {
                parsed.dropped_without_histology += 1;
                continue;
            }
            let mut clause = clause;
            let removed = clause.remove_contradictions();
            if !removed.is_empty() {
                parsed
                    .warnings
                    .push(format!("clause {i}: dropped exclusions also listed as inclusions: {removed:?}"));
            }
            parsed.clauses.push(clause);
        }
    }
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed)
}

fn find_array(text: &str) -> Option<Vec<Value>> {
    let starts: Vec<usize> = text.match_indices('[').map(|(i, _)| i).collect();
    for &start in &starts {
        let tail = &text[start..];
        let mut candidates = Vec::new();
        if let Some(end) = matching_bracket(tail, true) {
            candidates.push(&tail[..=end]);
        }
        if let Some(end) = matching_bracket(tail, false) {
            candidates.push(&tail[..=end]);
        }
        if let Some(end) = tail.rfind(']') {
            candidates.push(&tail[..=end]);
        }
        for cand in candidates {
            if let Some(Value::Array(items)) = parse_lenient(cand) {
                return Some(items);
            }
        }
    }
    None
}

/// Index of the `]` closing the `[` at position 0.
fn matching_bracket(s: &str, string_aware: bool) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if string_aware && in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if string_aware => in_str = true,
            '[' => depth += 1,
            ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_lenient(s: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str(s) {
        return Some(v);
    }
    serde_json::from_str(&repair(s)).ok()
}

fn repair(s: &str) -> String {
    static HALF_QUOTED: OnceLock<Regex> = OnceLock::new();
    static UNQUOTED: OnceLock<Regex> = OnceLock::new();
    static TRAILING: OnceLock<Regex> = OnceLock::new();
    let half = HALF_QUOTED.get_or_init(|| Regex::new(r#"([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)"\s*:"#).unwrap());
    let unq = UNQUOTED.get_or_init(|| Regex::new(r#"([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:"#).unwrap());
    let trailing = TRAILING.get_or_init(|| Regex::new(r",(\s*[\]}])").unwrap());
    let s = half.replace_all(s, r#"$1"$2":"#);
    let s = unq.replace_all(&s, r#"$1"$2":"#);
    trailing.replace_all(&s, "$1").into_owned()
}

fn as_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.trim().to_string(),
        Value::Array(items) => items.iter().map(as_text).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(", "),
        other => other.to_string(),
    }
}

fn as_list(v: &Value) -> Vec<String> {
    match v {
        Value::Null => Vec::new(),
        Value::Array(items) => items.iter().map(as_text).filter(|s| !s.is_empty()).collect(),
        other => {
            let s = as_text(other);
            if s.is_empty() {
                Vec::new()
            } else {
                vec![s]
            }
        }
    }
}

// A histology_inclusion given as a list expands to one clause per histology.
fn clause_from_object(
    index: usize,
    obj: &Map<String, Value>,
    warnings: &mut Vec<String>,
) -> Vec<EligibilityClause> {
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            warnings.push(format!("clause {index}: ignoring unknown key {key:?}"));
        }
    }
    let get = |k: &str| obj.get(k).unwrap_or(&Value::Null);
    let base = EligibilityClause {
        cohort: as_text(get("cohort")),
        disease_state: as_text(get("disease_state")),
        histology_inclusion: String::new(),
        biomarker_inclusion: as_list(get("biomarker_inclusion")),
        histology_exclusion: as_list(get("histology_exclusion")),
        biomarker_exclusion: as_list(get("biomarker_exclusion")),
    };
    let histologies = match get("histology_inclusion") {
        Value::Array(_) => as_list(get("histology_inclusion")),
        other => vec![as_text(other)],
    };
    if histologies.is_empty() {
        return vec![base];
    }
    histologies
        .into_iter()
        .map(|h| EligibilityClause {
            histology_inclusion: h,
            ..base.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_array() {
        let p = parse_extractor_json("[]").unwrap();
        assert!(p.clauses.is_empty());
        assert_eq!(p.dropped_without_histology, 0);
    }

    #[test]
    fn no_json() {
        assert_eq!(
            parse_extractor_json("I could not find any criteria."),
            Err(LogicError::NoJsonFound)
        );
    }

    #[test]
    fn element_not_object() {
        assert!(matches!(
            parse_extractor_json(r#"[{"histology_inclusion": "x"}, "oops"]"#),
            Err(LogicError::SchemaViolation(_))
        ));
    }

    #[test]
    fn code_fence_and_prose() {
        let text = "Here you go [see below]:\n```json\n[{\"histology_inclusion\": \"Melanoma\", \"biomarker_inclusion\": \"BRAF V600E\", \"extra\": 1}]\n```\nDone.";
        let p = parse_extractor_json(text).unwrap();
        assert_eq!(p.clauses.len(), 1);
        assert_eq!(p.clauses[0].biomarker_inclusion, vec!["BRAF V600E".to_string()]);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn missing_histology_dropped() {
        let p = parse_extractor_json(
            r#"[{"histology_inclusion": "NSCLC"}, {"biomarker_inclusion": ["KRAS G12C"]}, {"histology_inclusion": null}]"#,
        )
        .unwrap();
        assert_eq!(p.clauses.len(), 1);
        assert_eq!(p.dropped_without_histology, 2);
    }

    #[test]
    fn repairs_half_quoted_keys_and_trailing_commas() {
        let text = r#"[
    {"cohort": "A", disease_state": "advanced", "histology_inclusion": "Solid Tumor",  "biomarker_inclusion": ["RAS mutation"], "histology_exclusion": [], "biomarker_exclusion": []},
]"#;
        let p = parse_extractor_json(text).unwrap();
        assert_eq!(p.clauses.len(), 1);
        assert_eq!(p.clauses[0].disease_state, "advanced");
    }

    #[test]
    fn histology_list_expands() {
        let p = parse_extractor_json(r#"[{"histology_inclusion": ["LUAD", "LUSC"], "biomarker_inclusion": ["EGFR L858R"]}]"#).unwrap();
        assert_eq!(p.clauses.len(), 2);
        assert_eq!(p.clauses[1].histology_inclusion, "LUSC");
    }
}
