//! Independent reference implementations used to check the library.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;
use trialmatch::logic::{AtomCategory, BoolExpr, Conjunction, EligibilityClause, StructuredTrial};
use trialmatch::matcher::PatientRecord;
use trialmatch::ontology::{
    parse_biomarker, Biomarker, Hierarchy, HistologyConcept, Ontology, PathwayMap, SolidTumorRule,
    DEFAULT_ONCOTREE_JSON,
};

// ---- boolean expressions ----

pub fn random_expr(rng: &mut StdRng, atoms: usize, depth: u32) -> BoolExpr {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        let i = rng.random_range(0..atoms);
        return BoolExpr::atom(AtomCategory::Other, &format!("a{i}"));
    }
    match rng.random_range(0..5) {
        0 => BoolExpr::not(random_expr(rng, atoms, depth - 1)),
        k => {
            let n = rng.random_range(1..=3);
            let children = (0..n).map(|_| random_expr(rng, atoms, depth - 1)).collect();
            if k % 2 == 0 {
                BoolExpr::and(children)
            } else {
                BoolExpr::or(children)
            }
        }
    }
}

pub fn eval_expr(e: &BoolExpr, truth: &BTreeMap<String, bool>) -> bool {
    match e {
        BoolExpr::Atom(a) => truth[&a.text],
        BoolExpr::And(cs) => cs.iter().all(|c| eval_expr(c, truth)),
        BoolExpr::Or(cs) => cs.iter().any(|c| eval_expr(c, truth)),
        BoolExpr::Not(c) => !eval_expr(c, truth),
    }
}

pub fn eval_dnf(terms: &[Conjunction], truth: &BTreeMap<String, bool>) -> bool {
    terms
        .iter()
        .any(|t| t.iter().all(|l| truth[&l.atom.text] != l.negated))
}

/// Compares the expression and its DNF on every assignment of its atoms.
pub fn dnf_matches_truth_table(e: &BoolExpr, dnf: &[Conjunction]) -> Result<(), String> {
    let names: Vec<String> = e.atoms().into_iter().map(|a| a.text).collect();
    for mask in 0u32..(1 << names.len()) {
        let truth: BTreeMap<String, bool> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), mask & (1 << i) != 0))
            .collect();
        if eval_expr(e, &truth) != eval_dnf(dnf, &truth) {
            return Err(format!("assignment {truth:?} differs for {e:?}"));
        }
    }
    Ok(())
}

// ---- histology ----

/// Ancestor-or-self sets computed by iterating parent edges to a fixpoint.
pub struct ClosureOracle {
    pub codes: Vec<String>,
    ancestors: BTreeMap<String, BTreeSet<String>>,
    roots: BTreeSet<String>,
    hematologic: BTreeSet<String>,
}

pub const SOLID: &str = "SOLID";

impl ClosureOracle {
    pub fn new(edges: &[(String, Option<String>)], hematologic: &[&str]) -> Self {
        let mut anc: BTreeMap<String, BTreeSet<String>> = edges
            .iter()
            .map(|(c, p)| {
                let mut s = BTreeSet::from([c.clone()]);
                s.extend(p.clone());
                (c.clone(), s)
            })
            .collect();
        loop {
            let mut changed = false;
            let snapshot = anc.clone();
            for set in anc.values_mut() {
                for a in set.clone() {
                    for b in &snapshot[&a] {
                        changed |= set.insert(b.clone());
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Self {
            codes: edges.iter().map(|(c, _)| c.clone()).collect(),
            roots: edges.iter().filter(|(_, p)| p.is_none()).map(|(c, _)| c.clone()).collect(),
            hematologic: hematologic.iter().map(|s| s.to_string()).collect(),
            ancestors: anc,
        }
    }

    pub fn from_oncotree_json(text: &str) -> Self {
        let v: serde_json::Value = serde_json::from_str(text).unwrap();
        let edges: Vec<(String, Option<String>)> = v
            .as_array()
            .unwrap()
            .iter()
            .map(|n| {
                (
                    n["code"].as_str().unwrap().to_string(),
                    n["parent"].as_str().map(String::from),
                )
            })
            .collect();
        Self::new(&edges, &["MYELOID", "LYMPH"])
    }

    pub fn subsumes(&self, criterion: &str, patient: &str) -> bool {
        if criterion == patient {
            return true;
        }
        if patient == SOLID {
            return false;
        }
        let anc = &self.ancestors[patient];
        if criterion == SOLID {
            return !self.roots.contains(patient) && anc.is_disjoint(&self.hematologic);
        }
        anc.contains(criterion)
    }
}

// ---- small matching world ----

const SMALL_TREE: [(&str, Option<&str>, &str); 10] = [
    ("TISSUE", None, "Tissue"),
    ("LUNG", Some("TISSUE"), "Lung"),
    ("NSCLC", Some("LUNG"), "Non-Small Cell Lung Cancer"),
    ("LUAD", Some("NSCLC"), "Lung Adenocarcinoma"),
    ("LUSC", Some("NSCLC"), "Lung Squamous Cell Carcinoma"),
    ("BOWEL", Some("TISSUE"), "Bowel"),
    ("COAD", Some("BOWEL"), "Colon Adenocarcinoma"),
    ("MYELOID", Some("TISSUE"), "Myeloid"),
    ("AML", Some("MYELOID"), "Acute Myeloid Leukemia"),
    ("MDS", Some("MYELOID"), "Myelodysplastic Syndromes"),
];

pub fn small_ontology() -> Ontology {
    let concepts = SMALL_TREE
        .iter()
        .map(|(c, p, l)| HistologyConcept {
            code: c.to_string(),
            label: l.to_string(),
            parent_code: p.map(String::from),
            synonyms: Vec::new(),
        })
        .collect();
    let rule = SolidTumorRule {
        hematologic_roots: BTreeSet::from(["MYELOID".to_string()]),
        ..SolidTumorRule::default()
    };
    let h = Hierarchy::from_concepts(concepts, rule).unwrap();
    let pathways = PathwayMap::from_groups([
        ("RAS", vec!["KRAS", "NRAS", "HRAS"]),
        ("RAF", vec!["BRAF", "ARAF", "RAF1"]),
    ])
    .unwrap();
    Ontology::new(h, pathways)
}

pub fn small_oracle() -> ClosureOracle {
    let edges: Vec<(String, Option<String>)> = SMALL_TREE
        .iter()
        .map(|(c, p, _)| (c.to_string(), p.map(String::from)))
        .collect();
    ClosureOracle::new(&edges, &["MYELOID"])
}

const PATIENT_MARKERS: [&str; 5] = ["KRAS G12C", "KRAS G12D", "BRAF V600E", "EGFR L858R", "IDH1 R132H"];

/// Criterion biomarker text and the patient markers it accepts, by hand.
const CRITERION_MARKERS: [(&str, &[&str]); 10] = [
    ("KRAS G12C", &["KRAS G12C"]),
    ("KRAS mutation", &["KRAS G12C", "KRAS G12D"]),
    ("RAS mutation", &["KRAS G12C", "KRAS G12D"]),
    ("BRAF V600E", &["BRAF V600E"]),
    ("RAF mutation", &["BRAF V600E"]),
    ("EGFR L858R", &["EGFR L858R"]),
    ("EGFR mutation", &["EGFR L858R"]),
    ("IDH1 R132", &["IDH1 R132H"]),
    ("IDH1 mutation", &["IDH1 R132H"]),
    ("ERBB2 amplification", &[]),
];

const DESCRIPTORS: [&str; 4] = ["metastatic", "advanced", "locally advanced", "relapsed"];

/// Disease-state criterion and the descriptors that satisfy it; `None`
/// marks a criterion with no known term.
const DISEASE_CRITERIA: [(&str, Option<&[&str]>); 6] = [
    ("", Some(&[])),
    ("metastatic", Some(&["metastatic"])),
    ("advanced", Some(&["advanced", "locally advanced", "metastatic"])),
    ("advanced or metastatic", Some(&["advanced", "locally advanced", "metastatic"])),
    ("relapsed", Some(&["relapsed"])),
    ("newly diagnosed", None),
];

const UNKNOWN_HISTOLOGY: &str = "Mesothelioma";

fn histology_texts() -> Vec<&'static str> {
    let mut v: Vec<&str> = SMALL_TREE.iter().map(|(_, _, l)| *l).collect();
    v.push("Solid Tumor");
    v.push(UNKNOWN_HISTOLOGY);
    v
}

fn code_for(text: &str) -> Option<&'static str> {
    if text == "Solid Tumor" {
        return Some(SOLID);
    }
    SMALL_TREE.iter().find(|(_, _, l)| *l == text).map(|(c, _, _)| *c)
}

fn subset<'a>(rng: &mut StdRng, pool: &[&'a str], max: usize) -> Vec<&'a str> {
    let n = rng.random_range(0..=max);
    let mut out: Vec<&str> = (0..n).map(|_| *pool.choose(rng).unwrap()).collect();
    out.sort();
    out.dedup();
    out
}

pub fn random_patient(rng: &mut StdRng, id: usize) -> PatientRecord {
    let code = SMALL_TREE[rng.random_range(1..SMALL_TREE.len())].0;
    let markers = subset(rng, &PATIENT_MARKERS, 2);
    let descriptors = subset(rng, &DESCRIPTORS, 2);
    let json = serde_json::json!({
        "patient_id": format!("R{id:04}"),
        "histology": code,
        "disease_descriptors": descriptors,
        "biomarkers": markers,
    });
    serde_json::from_value(json).unwrap()
}

pub fn random_trial(rng: &mut StdRng, id: usize) -> StructuredTrial {
    let hist = histology_texts();
    let crit: Vec<&str> = CRITERION_MARKERS.iter().map(|(c, _)| *c).collect();
    let n = rng.random_range(1..=3);
    let clauses = (0..n)
        .map(|_| EligibilityClause {
            cohort: String::new(),
            disease_state: DISEASE_CRITERIA.choose(rng).unwrap().0.to_string(),
            histology_inclusion: hist.choose(rng).unwrap().to_string(),
            biomarker_inclusion: subset(rng, &crit, 2).into_iter().map(String::from).collect(),
            histology_exclusion: subset(rng, &hist, 1).into_iter().map(String::from).collect(),
            biomarker_exclusion: subset(rng, &crit, 1).into_iter().map(String::from).collect(),
        })
        .collect();
    StructuredTrial {
        nct_id: format!("NCT{:08}", 90000000 + id),
        clauses,
    }
}

/// Eligibility and first satisfied clause, computed from the hand tables.
pub fn brute_force_match(
    trial: &StructuredTrial,
    patient: &PatientRecord,
    lenient: bool,
    ignore_exclusions: bool,
) -> (bool, Option<usize>) {
    let oracle = small_oracle();
    let markers: BTreeSet<String> = patient.biomarkers.iter().map(|b| b.to_string()).collect();
    let accepts = |criterion: &str| {
        CRITERION_MARKERS
            .iter()
            .find(|(c, _)| *c == criterion)
            .unwrap()
            .1
            .iter()
            .any(|m| markers.contains(*m))
    };
    let hist_covers = |text: &str| code_for(text).map(|c| oracle.subsumes(c, &patient.histology));
    let clause_ok = |c: &EligibilityClause| -> bool {
        let hist_ok = hist_covers(&c.histology_inclusion).unwrap_or(lenient);
        let bio_ok = c.biomarker_inclusion.iter().all(|b| accepts(b));
        let (_, accepted) = DISEASE_CRITERIA.iter().find(|(d, _)| *d == c.disease_state).unwrap();
        let ds_ok = match accepted {
            None => lenient,
            Some(a) if c.disease_state.is_empty() => a.is_empty(),
            Some(a) => a.iter().any(|d| patient.disease_descriptors.contains(*d)),
        };
        let excluded = !ignore_exclusions
            && (c.histology_exclusion.iter().any(|h| hist_covers(h).unwrap_or(false))
                || c.biomarker_exclusion.iter().any(|b| accepts(b)));
        hist_ok && bio_ok && ds_ok && !excluded
    };
    let idx = trial.clauses.iter().position(clause_ok);
    (idx.is_some(), idx)
}

/// Biomarkers covering the amino acid, codon, exon, gene and pathway levels.
pub fn biomarker_grid() -> Vec<Biomarker> {
    let texts = [
        "KRAS G12C", "KRAS G12D", "KRAS G13D", "KRAS Q61H", "KRAS G12", "KRAS exon 2 mutation", "KRAS mutation",
        "NRAS Q61K", "NRAS Q61R", "NRAS mutation", "BRAF V600E", "BRAF V600K", "BRAF V600", "BRAF exon 15 mutation",
        "BRAF mutation", "EGFR L858R", "EGFR T790M", "EGFR exon 19 deletion", "EGFR exon 20 insertion",
        "EGFR mutation", "PIK3CA E545K", "PIK3CA H1047R", "PIK3CA mutation", "IDH1 R132H", "IDH1 R132",
        "IDH2 R140Q", "IDH1 mutation", "NF1 mutation", "ERBB2 amplification", "HER2 amplification",
        "ERBB2 mutation", "RAS mutation", "RAF mutation", "ALK fusion", "EML4-ALK fusion", "MSI-H",
    ];
    texts.iter().map(|t| parse_biomarker(t).unwrap()).collect()
}

/// Walks every generalization chain from the grid. Each step must move up a
/// level and keep covering whatever the more specific marker covered.
pub fn monotonicity_violations(ont: &Ontology) -> (usize, Vec<String>) {
    let grid = biomarker_grid();
    let mut violations = Vec::new();
    let mut frontier = grid.clone();
    let mut checked = 0;
    while let Some(c) = frontier.pop() {
        if !ont.subsumes_biomarker(&c, &c) {
            violations.push(format!("{c} not reflexive"));
        }
        for g in c.generalize(&ont.pathways) {
            if g.level < c.level {
                violations.push(format!("{g} is not above {c}"));
            }
            for p in &grid {
                checked += 1;
                if ont.subsumes_biomarker(&c, p) && !ont.subsumes_biomarker(&g, p) {
                    violations.push(format!("{c} covers {p} but {g} does not"));
                }
            }
            frontier.push(g);
        }
    }
    (checked, violations)
}

/// Compares `subsumes_histology` with the closure oracle on every ordered pair
/// of bundled codes (plus the solid-tumor root), and checks transitivity of the
/// implementation directly.
pub fn histology_violations(ont: &Ontology) -> (usize, Vec<String>) {
    let oracle = ClosureOracle::from_oncotree_json(DEFAULT_ONCOTREE_JSON);
    let mut codes = oracle.codes.clone();
    codes.push(SOLID.to_string());
    let mut rel = BTreeMap::new();
    let mut violations = Vec::new();
    for c in &codes {
        for p in &codes {
            let got = ont.histology.subsumes_histology(c, p).unwrap();
            if got != oracle.subsumes(c, p) {
                violations.push(format!("subsumes({c}, {p}) = {got}"));
            }
            rel.insert((c.as_str(), p.as_str()), got);
        }
        if !rel[&(c.as_str(), c.as_str())] {
            violations.push(format!("{c} not reflexive"));
        }
    }
    for a in &codes {
        for b in &codes {
            if !rel[&(a.as_str(), b.as_str())] {
                continue;
            }
            for c in &codes {
                if rel[&(b.as_str(), c.as_str())] && !rel[&(a.as_str(), c.as_str())] {
                    violations.push(format!("{a} > {b} > {c} not transitive"));
                }
            }
        }
    }
    (codes.len(), violations)
}
