//! Coded concepts for histology and biomarkers, with subsumption queries.

mod biomarker;
mod histology;
mod pathways;

use std::path::PathBuf;

use thiserror::Error;

pub use biomarker::{
    parse_biomarker, subsumes_biomarker, AlterationKind, Biomarker, BiomarkerLevel, Polarity,
    ProteinChange,
};
pub use histology::{normalize_term, Hierarchy, HistologyConcept, SolidTumorRule};
pub use pathways::PathwayMap;

#[derive(Error, Debug)]
pub enum OntologyError {
    #[error("cycle detected in hierarchy at code {0}")]
    CycleDetected(String),

    #[error("duplicate code {0}")]
    DuplicateCode(String),

    #[error("code {code} names unknown parent {parent}")]
    UnknownParent { code: String, parent: String },

    #[error("unknown code {0}")]
    UnknownCode(String),

    #[error("cannot parse biomarker {0:?}")]
    UnparseableBiomarker(String),

    #[error("invalid pathway map: {0}")]
    InvalidPathways(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type OntologyResult<T> = Result<T, OntologyError>;

/// Bundled mini OncoTree used when no `--oncotree` file is given.
pub const DEFAULT_ONCOTREE_JSON: &str = include_str!("../../data/oncotree_mini.json");
/// Bundled gene-family / pathway map used when no `--pathways` file is given.
pub const DEFAULT_PATHWAYS_JSON: &str = include_str!("../../data/pathways.json");

/// Hierarchy and pathway map loaded together; immutable after construction.
#[derive(Debug, Clone)]
pub struct Ontology {
    pub histology: Hierarchy,
    pub pathways: PathwayMap,
}

impl Ontology {
    pub fn new(histology: Hierarchy, pathways: PathwayMap) -> Self {
        Self { histology, pathways }
    }

    /// The bundled defaults.
    pub fn bundled() -> Self {
        Self {
            histology: Hierarchy::from_json(DEFAULT_ONCOTREE_JSON).expect("bundled oncotree is valid"),
            pathways: PathwayMap::from_json(DEFAULT_PATHWAYS_JSON).expect("bundled pathways are valid"),
        }
    }

    /// Loads either file when given, falling back to the bundled data.
    pub fn load(
        oncotree: Option<&std::path::Path>,
        pathways: Option<&std::path::Path>,
    ) -> OntologyResult<Self> {
        let histology = match oncotree {
            Some(p) => Hierarchy::load(p)?,
            None => Hierarchy::from_json(DEFAULT_ONCOTREE_JSON)?,
        };
        let pathways = match pathways {
            Some(p) => PathwayMap::load(p)?,
            None => PathwayMap::from_json(DEFAULT_PATHWAYS_JSON)?,
        };
        Ok(Self { histology, pathways })
    }

    pub fn subsumes_biomarker(&self, criterion: &Biomarker, patient: &Biomarker) -> bool {
        subsumes_biomarker(criterion, patient, &self.pathways)
    }
}
