//! Structure-then-match clinical trial matching.

pub mod evaluation;
pub mod extraction;
pub mod ingest;
pub mod llm;
pub mod logic;
pub mod matcher;
pub mod ontology;
