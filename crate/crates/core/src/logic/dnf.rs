use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{normalize_atom, LogicError, LogicResult};

pub const DEFAULT_DNF_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomCategory {
    Histology,
    Biomarker,
    DiseaseState,
    Other,
}

impl AtomCategory {
    fn tag(self) -> &'static str {
        match self {
            AtomCategory::Histology => "h",
            AtomCategory::Biomarker => "b",
            AtomCategory::DiseaseState => "d",
            AtomCategory::Other => "o",
        }
    }
}

/// An opaque criterion atom identified by its normalized text and category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub text: String,
    pub category: AtomCategory,
}

impl Atom {
    pub fn new(category: AtomCategory, text: &str) -> Self {
        Self {
            text: normalize_atom(text),
            category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn pos(category: AtomCategory, text: &str) -> Self {
        Self {
            atom: Atom::new(category, text),
            negated: false,
        }
    }

    pub fn neg(category: AtomCategory, text: &str) -> Self {
        Self {
            atom: Atom::new(category, text),
            negated: true,
        }
    }

    fn complement(&self) -> Self {
        Self {
            atom: self.atom.clone(),
            negated: !self.negated,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("NOT ")?;
        }
        write!(f, "{}:{}", self.atom.category.tag(), self.atom.text)
    }
}

/// A set of literals joined by AND.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Conjunction(pub BTreeSet<Literal>);

impl Conjunction {
    pub fn iter(&self) -> impl Iterator<Item = &Literal> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, lit: &Literal) -> bool {
        self.0.contains(lit)
    }

    fn is_contradictory(&self) -> bool {
        self.0.iter().any(|l| !l.negated && self.0.contains(&l.complement()))
    }

    /// Ordering used for DNF output: shorter conjunctions first, then lexicographic.
    fn sort_key(&self) -> (usize, &BTreeSet<Literal>) {
        (self.0.len(), &self.0)
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

/// General AND/OR/NOT criteria tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolExpr {
    Atom(Atom),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Not(Box<BoolExpr>),
}

impl BoolExpr {
    pub fn atom(category: AtomCategory, text: &str) -> Self {
        BoolExpr::Atom(Atom::new(category, text))
    }

    pub fn and(children: Vec<BoolExpr>) -> Self {
        BoolExpr::And(children)
    }

    pub fn or(children: Vec<BoolExpr>) -> Self {
        BoolExpr::Or(children)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(child))
    }

    pub fn validate(&self) -> LogicResult<()> {
        match self {
            BoolExpr::Atom(a) if a.text.trim().is_empty() => {
                Err(LogicError::InvalidExpression("empty atom".into()))
            }
            BoolExpr::Atom(_) => Ok(()),
            BoolExpr::And(cs) | BoolExpr::Or(cs) if cs.is_empty() => Err(
                LogicError::InvalidExpression("AND/OR node without children".into()),
            ),
            BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().try_for_each(BoolExpr::validate),
            BoolExpr::Not(c) => c.validate(),
        }
    }

    /// Distinct atoms in the tree, sorted.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            BoolExpr::Atom(a) => {
                out.insert(a.clone());
            }
            BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().for_each(|c| c.collect_atoms(out)),
            BoolExpr::Not(c) => c.collect_atoms(out),
        }
    }
}

/// Converts an expression to a subsumption-free disjunction of conjunctions
/// with the default expansion cap.
pub fn to_dnf(expr: &BoolExpr) -> LogicResult<Vec<Conjunction>> {
    to_dnf_with_cap(expr, DEFAULT_DNF_CAP)
}

pub fn to_dnf_with_cap(expr: &BoolExpr, cap: usize) -> LogicResult<Vec<Conjunction>> {
    expr.validate()?;
    let terms = expand(expr, false, cap)?;
    Ok(simplify(terms))
}

// Expands `expr` (negated when `neg`) into DNF terms, pushing negation to atoms.
fn expand(expr: &BoolExpr, neg: bool, cap: usize) -> LogicResult<Vec<Conjunction>> {
    match (expr, neg) {
        (BoolExpr::Atom(a), _) => {
            let lit = Literal {
                atom: Atom::new(a.category, &a.text),
                negated: neg,
            };
            Ok(vec![Conjunction(BTreeSet::from([lit]))])
        }
        (BoolExpr::Not(c), _) => expand(c, !neg, cap),
        (BoolExpr::Or(cs), false) | (BoolExpr::And(cs), true) => {
            let mut out = Vec::new();
            for c in cs {
                out.extend(expand(c, neg, cap)?);
                if out.len() > cap * cap {
                    return Err(LogicError::ExpansionLimitExceeded { cap });
                }
            }
            let out = simplify(out);
            check_cap(out, cap)
        }
        (BoolExpr::And(cs), false) | (BoolExpr::Or(cs), true) => {
            let mut acc = vec![Conjunction::default()];
            for c in cs {
                let rhs = expand(c, neg, cap)?;
                if acc.len().saturating_mul(rhs.len()) > cap * cap {
                    return Err(LogicError::ExpansionLimitExceeded { cap });
                }
                let mut next = Vec::with_capacity(acc.len() * rhs.len());
                for l in &acc {
                    for r in &rhs {
                        let mut merged = l.0.clone();
                        merged.extend(r.0.iter().cloned());
                        next.push(Conjunction(merged));
                    }
                }
                acc = check_cap(simplify(next), cap)?;
            }
            Ok(acc)
        }
    }
}

fn check_cap(terms: Vec<Conjunction>, cap: usize) -> LogicResult<Vec<Conjunction>> {
    if terms.len() > cap {
        Err(LogicError::ExpansionLimitExceeded { cap })
    } else {
        Ok(terms)
    }
}

/// Drops contradictory and duplicate conjunctions, removes any conjunction that
/// is a superset of another, and sorts deterministically.
fn simplify(terms: Vec<Conjunction>) -> Vec<Conjunction> {
    let mut terms: Vec<Conjunction> = terms
        .into_iter()
        .filter(|t| !t.is_contradictory())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    terms.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut kept: Vec<Conjunction> = Vec::with_capacity(terms.len());
    for t in terms {
        // Sorted by size, so any subset of `t` is already in `kept`.
        if !kept.iter().any(|k| k.0.is_subset(&t.0)) {
            kept.push(t);
        }
    }
    kept
}
