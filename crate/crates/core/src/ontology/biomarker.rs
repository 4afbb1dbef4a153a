use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::pathways::pathway_key;
use super::{OntologyError, OntologyResult, PathwayMap};

/// Granularity of a biomarker statement, most specific first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiomarkerLevel {
    AminoAcid,
    Exon,
    Chromosomal,
    Gene,
    Pathway,
    Phenotype,
}

impl BiomarkerLevel {
    /// Position on the amino-acid < exon < gene < pathway chain.
    fn chain_rank(self) -> Option<u8> {
        match self {
            BiomarkerLevel::AminoAcid => Some(0),
            BiomarkerLevel::Exon => Some(1),
            BiomarkerLevel::Gene => Some(2),
            BiomarkerLevel::Pathway => Some(3),
            BiomarkerLevel::Chromosomal | BiomarkerLevel::Phenotype => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlterationKind {
    Mutation,
    Amplification,
    Deletion,
    Fusion,
    Expression,
    Status,
}

impl AlterationKind {
    pub fn word(self) -> &'static str {
        match self {
            AlterationKind::Mutation => "mutation",
            AlterationKind::Amplification => "amplification",
            AlterationKind::Deletion => "deletion",
            AlterationKind::Fusion => "fusion",
            AlterationKind::Expression => "expression",
            AlterationKind::Status => "status",
        }
    }

    /// Whether a criterion of kind `self` accepts a patient finding of kind
    /// `patient` observed at `level`.
    fn accepts(self, patient: AlterationKind, level: BiomarkerLevel) -> bool {
        self == patient
            || (self == AlterationKind::Mutation
                && patient == AlterationKind::Deletion
                && matches!(level, BiomarkerLevel::AminoAcid | BiomarkerLevel::Exon))
            || (self == AlterationKind::Expression && patient == AlterationKind::Amplification)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

/// A parsed biomarker statement.
///
/// `detail` holds the level-specific part: a protein change such as `L858R`
/// or `V600E/K`, `exon 19`, a chromosomal description, a pathway name, a
/// phenotype label, or (at gene level) a fusion partner pair like `EML4-ALK`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "BiomarkerRepr")]
pub struct Biomarker {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gene: Option<String>,
    pub level: BiomarkerLevel,
    pub detail: String,
    pub alteration_kind: AlterationKind,
    #[serde(default)]
    pub polarity: Polarity,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BiomarkerRepr {
    Text(String),
    Full {
        #[serde(default)]
        gene: Option<String>,
        level: BiomarkerLevel,
        #[serde(default)]
        detail: String,
        alteration_kind: AlterationKind,
        #[serde(default)]
        polarity: Polarity,
    },
}

impl TryFrom<BiomarkerRepr> for Biomarker {
    type Error = OntologyError;

    fn try_from(r: BiomarkerRepr) -> Result<Self, Self::Error> {
        match r {
            BiomarkerRepr::Text(s) => parse_biomarker(&s),
            BiomarkerRepr::Full {
                gene,
                level,
                detail,
                alteration_kind,
                polarity,
            } => Ok(Biomarker {
                gene,
                level,
                detail,
                alteration_kind,
                polarity,
            }),
        }
    }
}

impl fmt::Display for Biomarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gene = self.gene.as_deref().unwrap_or("");
        match self.level {
            BiomarkerLevel::AminoAcid => {
                write!(f, "{gene} {}", self.detail)?;
                if self.alteration_kind != implied_kind(&self.detail) {
                    write!(f, " {}", self.alteration_kind.word())?;
                }
            }
            BiomarkerLevel::Exon => write!(f, "{gene} {} {}", self.detail, self.alteration_kind.word())?,
            BiomarkerLevel::Gene => {
                let name = if self.detail.is_empty() { gene } else { &self.detail };
                write!(f, "{name} {}", self.alteration_kind.word())?;
            }
            BiomarkerLevel::Pathway => write!(f, "{} pathway {}", self.detail, self.alteration_kind.word())?,
            BiomarkerLevel::Chromosomal | BiomarkerLevel::Phenotype => f.write_str(&self.detail)?,
        }
        if self.polarity == Polarity::Negative {
            f.write_str(" negative")?;
        }
        Ok(())
    }
}

fn implied_kind(protein_detail: &str) -> AlterationKind {
    if protein_detail.ends_with("del") {
        AlterationKind::Deletion
    } else {
        AlterationKind::Mutation
    }
}

/// A protein-level change: reference residue, position, optional range end,
/// and accepted alternates (empty means any change at that codon).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinChange {
    pub reference: char,
    pub position: u32,
    pub end: Option<(char, u32)>,
    pub alternates: BTreeSet<String>,
}

impl ProteinChange {
    /// Parses one-letter (`L858R`, `p.V600E`, `G12C/D`, `E746_A750del`) or
    /// three-letter (`p.Val600Glu`) notation.
    pub fn parse(token: &str) -> Option<Self> {
        let t = token.trim().trim_matches(|c| c == '(' || c == ')');
        let t = t
            .strip_prefix("p.")
            .or_else(|| t.strip_prefix("P."))
            .unwrap_or(t)
            .trim_matches(|c| c == '(' || c == ')');
        if let Some(one) = three_to_one(t) {
            return Self::parse_one_letter(&one);
        }
        Self::parse_one_letter(&t.to_uppercase())
    }

    fn parse_one_letter(t: &str) -> Option<Self> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            let aa = "[ACDEFGHIKLMNPQRSTVWY]";
            let alt = r"(?:DELINS[A-Z]*|DEL|INS[A-Z]*|DUP|FS\*?\d*|[ACDEFGHIKLMNPQRSTVWYX*])";
            Regex::new(&format!(
                r"^({aa})(\d{{1,4}})(?:_({aa})(\d{{1,4}}))?({alt}(?:/{alt})*)?$"
            ))
            .unwrap()
        });
        let caps = re.captures(t)?;
        let reference = caps[1].chars().next()?;
        let position = caps[2].parse().ok()?;
        let end = match (caps.get(3), caps.get(4)) {
            (Some(r), Some(p)) => Some((r.as_str().chars().next()?, p.as_str().parse().ok()?)),
            _ => None,
        };
        let mut alternates = BTreeSet::new();
        if let Some(alts) = caps.get(5) {
            for a in alts.as_str().split('/') {
                let a = if a.starts_with("DELINS") {
                    "delins".to_string()
                } else if a.starts_with("DEL") {
                    "del".to_string()
                } else if a.starts_with("INS") {
                    "ins".to_string()
                } else if a.starts_with("DUP") {
                    "dup".to_string()
                } else if a.starts_with("FS") {
                    "fs".to_string()
                } else {
                    a.to_string()
                };
                alternates.insert(a);
            }
        }
        // X means any residue, which is the same as naming only the codon.
        if alternates.contains("X") {
            alternates.clear();
        }
        Some(Self {
            reference,
            position,
            end,
            alternates,
        })
    }

    pub fn is_codon_only(&self) -> bool {
        self.alternates.is_empty()
    }

    fn covers(&self, other: &ProteinChange) -> bool {
        if self.position != other.position || self.reference != other.reference {
            return false;
        }
        if self.is_codon_only() {
            return true;
        }
        self.end == other.end && !other.alternates.is_empty() && other.alternates.is_subset(&self.alternates)
    }
}

impl fmt::Display for ProteinChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.reference, self.position)?;
        if let Some((r, p)) = self.end {
            write!(f, "_{r}{p}")?;
        }
        let alts: Vec<&str> = self.alternates.iter().map(String::as_str).collect();
        f.write_str(&alts.join("/"))
    }
}

fn three_to_one(t: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"^([A-Z][a-z]{2})(\d{1,4})([A-Z][a-z]{2}|\*|del|dup|fs)?$").unwrap()
    });
    let caps = re.captures(t)?;
    let code = |s: &str| -> Option<&'static str> {
        Some(match s {
            "Ala" => "A",
            "Arg" => "R",
            "Asn" => "N",
            "Asp" => "D",
            "Cys" => "C",
            "Gln" => "Q",
            "Glu" => "E",
            "Gly" => "G",
            "His" => "H",
            "Ile" => "I",
            "Leu" => "L",
            "Lys" => "K",
            "Met" => "M",
            "Phe" => "F",
            "Pro" => "P",
            "Ser" => "S",
            "Thr" => "T",
            "Trp" => "W",
            "Tyr" => "Y",
            "Val" => "V",
            "Ter" => "*",
            _ => return None,
        })
    };
    let mut out = code(&caps[1])?.to_string();
    out.push_str(&caps[2]);
    if let Some(alt) = caps.get(3) {
        match alt.as_str() {
            "*" => out.push('*'),
            "del" | "dup" | "fs" => out.push_str(&alt.as_str().to_uppercase()),
            other => out.push_str(code(other)?),
        }
    }
    Some(out)
}

/// Exon holding `codon` for genes with well-known hotspot exons.
fn exon_of(gene: &str, codon: u32) -> Option<u32> {
    const TABLE: &[(&str, u32, u32, u32)] = &[
        ("EGFR", 688, 728, 18),
        ("EGFR", 729, 761, 19),
        ("EGFR", 762, 823, 20),
        ("EGFR", 824, 875, 21),
        ("KRAS", 1, 37, 2),
        ("KRAS", 38, 97, 3),
        ("KRAS", 98, 150, 4),
        ("NRAS", 1, 37, 2),
        ("NRAS", 38, 97, 3),
        ("NRAS", 98, 150, 4),
        ("BRAF", 439, 478, 11),
        ("BRAF", 581, 620, 15),
        ("PIK3CA", 513, 553, 9),
        ("PIK3CA", 1010, 1068, 20),
        ("IDH1", 41, 138, 4),
        ("IDH2", 125, 180, 4),
        ("KIT", 449, 514, 9),
        ("KIT", 550, 592, 11),
        ("KIT", 788, 828, 17),
        ("ERBB2", 755, 830, 20),
    ];
    TABLE
        .iter()
        .find(|(g, lo, hi, _)| *g == gene && (*lo..=*hi).contains(&codon))
        .map(|(_, _, _, e)| *e)
}

const STOP_WORDS: &[&str] = &[
    "A", "ACTIVATING", "ACQUIRED", "ALTERATION", "ALTERATIONS", "ALTERED", "AMPLIFICATION", "AMPLIFIED",
    "AN", "AND", "ANY", "BY", "CO-DELETION", "CODELETION", "CODON", "CONFIRMED", "COPY", "DEL", "DELETED",
    "DELETION", "DELETIONS", "DELETERIOUS", "DOCUMENTED", "DRIVER", "EXON", "EXPRESSING", "EXPRESSION",
    "FOR", "FUNCTION", "FUSION", "FUSIONS", "GAIN", "GENE", "GERMLINE", "HARBORING", "HAS", "HAVE", "HIGH",
    "IN", "INS", "INSERTION", "INSERTIONS", "KNOWN", "LEVEL", "LOSS", "LOW", "MUTANT", "MUTATED", "MUTATION",
    "MUTATIONS", "NUMBER", "OF", "ON", "OR", "OTHER", "OVEREXPRESSION", "OVEREXPRESSED", "PATHOGENIC",
    "POINT", "POSITIVE", "POSITIVITY", "PRIOR", "PROTEIN", "REARRANGED", "REARRANGEMENT",
    "REARRANGEMENTS", "SENSITIZING", "SKIPPING", "SOMATIC", "STATUS", "SUBSTITUTION", "TESTING",
    "THE", "TO", "TRANSLOCATION", "TUMOR", "TYPE", "VARIANT", "VARIANTS", "WITH",
];

const KNOWN_GENES: &[&str] = &[
    "AKT1", "ALK", "APC", "AR", "ARAF", "ATM", "ATR", "BAP1", "BRAF", "BRCA", "BRCA1", "BRCA2", "CDK4",
    "CDK6", "CDKN2A", "CTNNB1", "EGFR", "ERBB2", "ERBB3", "ESR1", "EZH2", "FGFR", "FGFR1", "FGFR2",
    "FGFR3", "FLT3", "HRAS", "IDH", "IDH1", "IDH2", "JAK2", "KIT", "KRAS", "MET", "MTOR", "MYC", "NF1",
    "NF2", "NOTCH1", "NPM1", "NRAS", "NRG1", "NTRK", "PALB2", "PDGFRA", "PIK3CA", "PTEN", "RAF", "RAF1",
    "RAS", "RB1", "RET", "ROS1", "SMAD4", "STK11", "TERT", "TP53", "TSC1", "TSC2", "VHL",
];

const FUSION_DRIVERS: &[&str] = &["ALK", "ROS1", "RET", "NTRK", "NTRK1", "NTRK2", "NTRK3", "NRG1"];

const BUILTIN_PATHWAYS: &[&str] = &["RAS/MAPK", "MAPK", "RAS/RAF/MEK/ERK", "PI3K/AKT/MTOR", "PI3K/AKT", "HRR", "DDR"];

fn gene_alias(symbol: &str) -> &str {
    match symbol {
        "HER2" | "HER-2" => "ERBB2",
        "C-MET" => "MET",
        "C-KIT" => "KIT",
        "P53" => "TP53",
        "HER3" => "ERBB3",
        other => other,
    }
}

fn is_gene_shaped(upper: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^[A-Z][A-Z0-9]{1,9}(-[A-Z0-9]{1,9})?$").unwrap());
    re.is_match(upper) && !STOP_WORDS.contains(&upper)
}

fn kind_from_words(lower: &str) -> Option<AlterationKind> {
    static RES: OnceLock<Vec<(Regex, AlterationKind)>> = OnceLock::new();
    let res = RES.get_or_init(|| {
        [
            (r"\b(fusions?|rearrange(d|ments?)|translocations?)\b|\bt\(", AlterationKind::Fusion),
            (r"\b(amplifications?|amplified|gains?|trisomy)\b", AlterationKind::Amplification),
            (r"\b(deletions?|deleted|co-?deletion|codeleted|co-deleted|loss|monosomy)\b|\bdel\(", AlterationKind::Deletion),
            (r"\b(expression|overexpression|overexpressed|expressing)\b", AlterationKind::Expression),
            (r"\bstatus\b", AlterationKind::Status),
            (
                r"\b(mutations?|mutant|mutated|variants?|alterations?|altered|aberrations?|activating|sensitizing|insertions?|skipping|substitutions?)\b",
                AlterationKind::Mutation,
            ),
        ]
        .into_iter()
        .map(|(p, k)| (Regex::new(p).unwrap(), k))
        .collect()
    });
    res.iter().find(|(re, _)| re.is_match(lower)).map(|(_, k)| *k)
}

fn phenotype(lower: &str) -> Option<(&'static str, AlterationKind)> {
    static RES: OnceLock<Vec<(Regex, &'static str, AlterationKind)>> = OnceLock::new();
    let res = RES.get_or_init(|| {
        [
            (r"\bmsi[- ]?l(ow)?\b|microsatellite[- ]instability[- ]low", "MSI-L", AlterationKind::Status),
            (r"\bmsi\b|\bmsi[- ]?h(igh)?\b|microsatellite[- ]instability|high microsatellite", "MSI-H", AlterationKind::Status),
            (r"\bmss\b|microsatellite[- ]stab", "MSS", AlterationKind::Status),
            (r"\bdmmr\b|mismatch[- ]repair[- ]deficien|deficient mismatch[- ]repair|\bmmr[- ]deficien|\bmmr[- ]d\b", "dMMR", AlterationKind::Status),
            (r"\bpmmr\b|mismatch[- ]repair[- ]proficien|proficient mismatch[- ]repair|\bmmr[- ]proficien", "pMMR", AlterationKind::Status),
            (r"\btmb[- ]?l(ow)?\b|low tmb|low tumou?r mutational burden", "TMB-L", AlterationKind::Status),
            (r"\btmb\b|tumou?r mutational burden", "TMB-H", AlterationKind::Status),
            (r"\bhrd\b|homologous recombination deficien", "HRD", AlterationKind::Status),
            (r"\bpd-?l1\b|programmed death[- ]ligand[- ]1", "PD-L1", AlterationKind::Expression),
            (r"\bmgmt\b.*methylat", "MGMT methylated", AlterationKind::Status),
            (r"\bhr\b|hormone[- ]receptor", "HR", AlterationKind::Status),
            (r"\ber\b|o?estrogen[- ]receptor", "ER", AlterationKind::Status),
            (r"\bpr\b|\bpgr\b|progesterone[- ]receptor", "PR", AlterationKind::Status),
        ]
        .into_iter()
        .map(|(p, l, k)| (Regex::new(p).unwrap(), l, k))
        .collect()
    });
    if let Some((_, label, kind)) = res.iter().find(|(re, _, _)| re.is_match(lower)) {
        return Some((label, *kind));
    }
    // HER2 status unless the text names a mutation of ERBB2.
    static HER2: OnceLock<Regex> = OnceLock::new();
    static MUT: OnceLock<Regex> = OnceLock::new();
    let her2 = HER2.get_or_init(|| Regex::new(r"\bher-?2\b|\berbb2\b").unwrap());
    let mutation = MUT.get_or_init(|| {
        Regex::new(r"\b(mutations?|mutant|mutated|variants?|exon|insertions?)\b|\b[a-z]\d{2,4}[a-z]\b").unwrap()
    });
    if her2.is_match(lower) && !mutation.is_match(lower) {
        return Some(("HER2", AlterationKind::Status));
    }
    None
}

fn chromosomal(lower: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r"(^|[\s(])(1p/19q|\d{1,2}[pq]\d*(\.\d+)?|del\(\d{1,2}[pq]?\)|t\(\d{1,2};\d{1,2}\)|(monosomy|trisomy) \d{1,2}|chromosome \d{1,2}[pq]?)(\s|$|[),])",
        )
        .unwrap()
    });
    re.is_match(lower)
}

/// Splits off polarity words and trailing `+`/`-` signs.
fn strip_polarity(text: &str) -> (String, Polarity) {
    static NEG: OnceLock<Regex> = OnceLock::new();
    static POS: OnceLock<Regex> = OnceLock::new();
    let neg = NEG.get_or_init(|| {
        Regex::new(r"(?i)\b(negative|negativity|wild[- ]?type|wt|absent|absence of|no|not|without|non-mutated|unmutated)\b")
            .unwrap()
    });
    let pos = POS.get_or_init(|| Regex::new(r"(?i)\b(positive|positivity)\b").unwrap());
    let mut polarity = Polarity::Positive;
    if neg.is_match(text) || text.split_whitespace().any(|t| t.len() > 1 && t.ends_with('-')) {
        polarity = Polarity::Negative;
    }
    let removed = neg.replace_all(text, " ");
    let removed = pos.replace_all(&removed, " ");
    let tokens: Vec<&str> = removed
        .split_whitespace()
        .map(|t| if t.len() > 1 { t.trim_end_matches(['-', '+']) } else { t })
        .filter(|t| !t.is_empty())
        .collect();
    (tokens.join(" "), polarity)
}

/// Parses a free-text biomarker phrase into a structured [`Biomarker`].
pub fn parse_biomarker(text: &str) -> OntologyResult<Biomarker> {
    let unparseable = || OntologyError::UnparseableBiomarker(text.to_string());
    let (stripped, polarity) = strip_polarity(text.trim());
    if stripped.is_empty() {
        return Err(unparseable());
    }
    let lower = stripped.to_lowercase();
    let explicit_kind = kind_from_words(&lower);

    if let Some((label, kind)) = phenotype(&lower) {
        return Ok(Biomarker {
            gene: None,
            level: BiomarkerLevel::Phenotype,
            detail: label.to_string(),
            alteration_kind: kind,
            polarity,
        });
    }

    if let Some(name) = pathway_name(&stripped) {
        return Ok(Biomarker {
            gene: None,
            level: BiomarkerLevel::Pathway,
            detail: name,
            alteration_kind: explicit_kind.unwrap_or(AlterationKind::Mutation),
            polarity,
        });
    }

    let tokens: Vec<&str> = stripped
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .map(|t| t.trim_matches(|c: char| matches!(c, '(' | ')' | ':' | '.')))
        .filter(|t| !t.is_empty())
        .collect();

    // The gene is the first gene-shaped token that is not a complete protein change.
    let mut gene_idx = None;
    for (i, t) in tokens.iter().enumerate() {
        let upper = t.to_uppercase();
        if !is_gene_shaped(&upper) {
            continue;
        }
        if ProteinChange::parse(t).is_some_and(|p| !p.is_codon_only()) {
            continue;
        }
        // Lowercase words count only when they are familiar symbols or carry a digit.
        let all_lower = t.chars().all(|c| !c.is_ascii_uppercase());
        if all_lower && !KNOWN_GENES.contains(&upper.as_str()) && !upper.chars().any(|c| c.is_ascii_digit()) {
            continue;
        }
        gene_idx = Some(i);
        break;
    }

    if chromosomal(&lower) {
        let has_protein = gene_idx.is_some_and(|g| tokens[g + 1..].iter().any(|t| ProteinChange::parse(t).is_some()));
        if !has_protein {
            return Ok(Biomarker {
                gene: None,
                level: BiomarkerLevel::Chromosomal,
                detail: lower,
                alteration_kind: explicit_kind.unwrap_or(AlterationKind::Mutation),
                polarity,
            });
        }
    }

    let gi = gene_idx.ok_or_else(unparseable)?;
    let symbol = tokens[gi].to_uppercase();

    let protein = tokens[gi + 1..].iter().find_map(|t| ProteinChange::parse(t));
    if let Some(pc) = protein {
        let detail = pc.to_string();
        let kind = explicit_kind.unwrap_or_else(|| implied_kind(&detail));
        return Ok(Biomarker {
            gene: Some(gene_alias(&symbol).to_string()),
            level: BiomarkerLevel::AminoAcid,
            detail,
            alteration_kind: kind,
            polarity,
        });
    }

    static EXON: OnceLock<Regex> = OnceLock::new();
    let exon = EXON.get_or_init(|| Regex::new(r"\bexon\s*(\d{1,3})\b").unwrap());
    if let Some(c) = exon.captures(&lower) {
        return Ok(Biomarker {
            gene: Some(gene_alias(&symbol).to_string()),
            level: BiomarkerLevel::Exon,
            detail: format!("exon {}", c[1].trim_start_matches('0')),
            alteration_kind: explicit_kind.unwrap_or(AlterationKind::Mutation),
            polarity,
        });
    }

    // A hyphenated pair of gene symbols names a fusion; the 3' partner is the gene.
    let (gene, detail) = match symbol.split_once('-') {
        Some((a, b)) if gene_alias(&symbol) == symbol && a.len() >= 2 && b.len() >= 2 && is_gene_shaped(a) && is_gene_shaped(b) => {
            (b.to_string(), symbol.clone())
        }
        _ => (gene_alias(&symbol).to_string(), String::new()),
    };
    let kind = match explicit_kind {
        Some(k) => k,
        None if !detail.is_empty() || FUSION_DRIVERS.contains(&gene.as_str()) => AlterationKind::Fusion,
        None => AlterationKind::Mutation,
    };
    Ok(Biomarker {
        gene: Some(gene),
        level: BiomarkerLevel::Gene,
        detail,
        alteration_kind: kind,
        polarity,
    })
}

fn pathway_name(text: &str) -> Option<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if let Some(pos) = words.iter().position(|w| w.eq_ignore_ascii_case("pathway")) {
        if pos > 0 {
            return Some(pathway_key(&words[..pos].join(" ")));
        }
    }
    let first = pathway_key(words.first()?);
    BUILTIN_PATHWAYS.contains(&first.as_str()).then_some(first)
}

/// Members of `gene` when it names a family in `pathways`, else just itself.
fn expand_gene(gene: &str, pathways: &PathwayMap) -> BTreeSet<String> {
    match pathways.genes(gene) {
        Some(members) => members.clone(),
        None => BTreeSet::from([gene.to_string()]),
    }
}

/// Whether the criterion biomarker covers the patient's biomarker.
///
/// Phenotype and chromosomal statements match only their own kind by label.
/// Otherwise the criterion must sit at the same or a coarser level on the
/// amino acid < exon < gene < pathway chain, agree on polarity, accept the
/// patient's alteration kind, and contain the patient's gene/position.
pub fn subsumes_biomarker(criterion: &Biomarker, patient: &Biomarker, pathways: &PathwayMap) -> bool {
    if criterion.polarity != patient.polarity {
        return false;
    }
    let (Some(cr), Some(pr)) = (criterion.level.chain_rank(), patient.level.chain_rank()) else {
        return criterion.level == patient.level
            && criterion.gene == patient.gene
            && criterion.alteration_kind.accepts(patient.alteration_kind, patient.level)
            && criterion.detail.eq_ignore_ascii_case(&patient.detail);
    };
    if cr < pr || !criterion.alteration_kind.accepts(patient.alteration_kind, patient.level) {
        return false;
    }
    let pgene = patient.gene.as_deref().unwrap_or("");
    match criterion.level {
        BiomarkerLevel::AminoAcid => {
            criterion.gene.as_deref() == Some(pgene)
                && match (ProteinChange::parse(&criterion.detail), ProteinChange::parse(&patient.detail)) {
                    (Some(c), Some(p)) => c.covers(&p),
                    _ => criterion.detail == patient.detail,
                }
        }
        BiomarkerLevel::Exon => {
            criterion.gene.as_deref() == Some(pgene)
                && match patient.level {
                    BiomarkerLevel::Exon => criterion.detail == patient.detail,
                    _ => ProteinChange::parse(&patient.detail)
                        .and_then(|p| exon_of(pgene, p.position))
                        .is_some_and(|e| criterion.detail == format!("exon {e}")),
                }
        }
        BiomarkerLevel::Gene => {
            let cgene = criterion.gene.as_deref().unwrap_or("");
            let gene_ok = cgene == pgene
                || (pathways.contains_gene(cgene, pgene) && pathways.genes(pgene).is_none());
            gene_ok && (criterion.detail.is_empty() || criterion.detail == patient.detail)
        }
        BiomarkerLevel::Pathway => match patient.level {
            BiomarkerLevel::Pathway => pathway_key(&criterion.detail) == pathway_key(&patient.detail),
            _ => pathways
                .genes(&criterion.detail)
                .is_some_and(|set| !pgene.is_empty() && expand_gene(pgene, pathways).is_subset(set)),
        },
        BiomarkerLevel::Chromosomal | BiomarkerLevel::Phenotype => unreachable!(),
    }
}

impl Biomarker {
    pub fn is_positive(&self) -> bool {
        self.polarity == Polarity::Positive
    }

    /// Abstractions of this biomarker one step up the amino acid < exon <
    /// gene < pathway chain. Anything this covers, each abstraction covers.
    pub fn generalize(&self, pathways: &PathwayMap) -> Vec<Biomarker> {
        let with = |gene: Option<String>, level, detail: String| Biomarker {
            gene,
            level,
            detail,
            alteration_kind: self.alteration_kind,
            polarity: self.polarity,
        };
        let gene = self.gene.clone().unwrap_or_default();
        match self.level {
            BiomarkerLevel::AminoAcid => {
                let exon = ProteinChange::parse(&self.detail).and_then(|p| exon_of(&gene, p.position));
                match exon {
                    Some(e) => vec![with(self.gene.clone(), BiomarkerLevel::Exon, format!("exon {e}"))],
                    None => vec![with(self.gene.clone(), BiomarkerLevel::Gene, String::new())],
                }
            }
            BiomarkerLevel::Exon => vec![with(self.gene.clone(), BiomarkerLevel::Gene, String::new())],
            BiomarkerLevel::Gene => {
                let mut out = Vec::new();
                if !self.detail.is_empty() {
                    out.push(with(self.gene.clone(), BiomarkerLevel::Gene, String::new()));
                }
                let members = expand_gene(&gene, pathways);
                for name in pathways.covering(&members) {
                    out.push(with(None, BiomarkerLevel::Pathway, name.to_string()));
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Biomarker {
        parse_biomarker(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    fn pathways() -> PathwayMap {
        PathwayMap::from_json(crate::ontology::DEFAULT_PATHWAYS_JSON).unwrap()
    }

    #[test]
    fn parses_levels() {
        let b = p("EGFR L858R");
        assert_eq!((b.gene.as_deref(), b.level, b.detail.as_str()), (Some("EGFR"), BiomarkerLevel::AminoAcid, "L858R"));
        let b = p("BRAF p.Val600Glu");
        assert_eq!(b.detail, "V600E");
        let b = p("EGFR exon 19 deletion");
        assert_eq!((b.level, b.detail.as_str(), b.alteration_kind), (BiomarkerLevel::Exon, "exon 19", AlterationKind::Deletion));
        let b = p("KRAS mutation");
        assert_eq!((b.level, b.alteration_kind), (BiomarkerLevel::Gene, AlterationKind::Mutation));
        let b = p("RAS/MAPK pathway alteration");
        assert_eq!((b.level, b.detail.as_str()), (BiomarkerLevel::Pathway, "RAS/MAPK"));
        let b = p("1p/19q co-deletion");
        assert_eq!((b.level, b.alteration_kind), (BiomarkerLevel::Chromosomal, AlterationKind::Deletion));
        let b = p("MSI-H");
        assert_eq!((b.level, b.detail.as_str()), (BiomarkerLevel::Phenotype, "MSI-H"));
        let b = p("PD-L1 TPS >= 50%");
        assert_eq!((b.detail.as_str(), b.alteration_kind), ("PD-L1", AlterationKind::Expression));
        let b = p("HER2-negative");
        assert_eq!((b.detail.as_str(), b.polarity), ("HER2", Polarity::Negative));
        let b = p("HER2 exon 20 insertion");
        assert_eq!((b.gene.as_deref(), b.level), (Some("ERBB2"), BiomarkerLevel::Exon));
        let b = p("EML4-ALK fusion");
        assert_eq!((b.gene.as_deref(), b.detail.as_str()), (Some("ALK"), "EML4-ALK"));
        let b = p("ALK positive");
        assert_eq!((b.alteration_kind, b.polarity), (AlterationKind::Fusion, Polarity::Positive));
        let b = p("KRAS wild-type");
        assert_eq!(b.polarity, Polarity::Negative);
        let b = p("activating egfr mutation");
        assert_eq!(b.gene.as_deref(), Some("EGFR"));
        let b = p("EGFR E746_A750del");
        assert_eq!((b.detail.as_str(), b.alteration_kind), ("E746_A750del", AlterationKind::Deletion));
    }

    #[test]
    fn unparseable() {
        assert!(parse_biomarker("").is_err());
        assert!(parse_biomarker("V600E").is_err());
        assert!(parse_biomarker("adequate organ function").is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "EGFR L858R",
            "BRAF V600E/K",
            "EGFR exon 19 deletion",
            "KRAS mutation",
            "EML4-ALK fusion",
            "RAS/MAPK pathway mutation",
            "MSI-H",
            "HER2 negative",
            "1p/19q co-deletion",
            "EGFR E746_A750del",
            "KRAS G12C negative",
        ] {
            let b = p(s);
            assert_eq!(p(&b.to_string()), b, "{s} -> {b}");
        }
    }

    #[test]
    fn subsumption_chain() {
        let pw = pathways();
        let pat = p("KRAS G12C");
        for crit in ["KRAS G12C", "KRAS G12", "KRAS G12C/D", "KRAS exon 2 mutation", "KRAS mutation", "RAS mutation", "RAS/MAPK pathway mutation"] {
            assert!(subsumes_biomarker(&p(crit), &pat, &pw), "{crit}");
        }
        for crit in ["KRAS G12D", "NRAS mutation", "KRAS amplification", "KRAS wild-type", "KRAS exon 3 mutation"] {
            assert!(!subsumes_biomarker(&p(crit), &pat, &pw), "{crit}");
        }
        // More specific criterion never covers a coarser patient finding.
        assert!(!subsumes_biomarker(&p("KRAS G12C"), &p("KRAS mutation"), &pw));
    }

    #[test]
    fn kind_compatibility() {
        let pw = pathways();
        assert!(subsumes_biomarker(&p("EGFR mutation"), &p("EGFR exon 19 deletion"), &pw));
        assert!(!subsumes_biomarker(&p("EGFR mutation"), &p("EGFR deletion"), &pw));
        assert!(subsumes_biomarker(&p("MET expression"), &p("MET amplification"), &pw));
        assert!(!subsumes_biomarker(&p("ALK fusion"), &p("ALK mutation"), &pw));
        assert!(subsumes_biomarker(&p("ALK fusion"), &p("EML4-ALK fusion"), &pw));
        assert!(!subsumes_biomarker(&p("EML4-ALK fusion"), &p("ALK fusion"), &pw));
    }

    #[test]
    fn generalize_is_monotone_on_examples() {
        let pw = pathways();
        let pat = p("EGFR L858R");
        let mut c = p("EGFR L858R");
        let mut steps = 0;
        loop {
            let up = c.generalize(&pw);
            if up.is_empty() {
                break;
            }
            for g in &up {
                assert!(subsumes_biomarker(g, &pat, &pw), "{g}");
            }
            c = up.last().unwrap().clone();
            steps += 1;
        }
        assert_eq!(steps, 3);
    }

    #[test]
    fn deserializes_from_string_or_object() {
        let b: Biomarker = serde_json::from_str("\"BRAF V600E\"").unwrap();
        let again: Biomarker = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(b, again);
    }
}
