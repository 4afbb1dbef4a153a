use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{OntologyError, OntologyResult};

/// Gene families and pathways, each mapped to its member gene symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathwayMap {
    groups: BTreeMap<String, BTreeSet<String>>,
}

/// Uppercases, collapses whitespace and drops a trailing "PATHWAY".
pub(crate) fn pathway_key(name: &str) -> String {
    let upper = name.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase();
    upper
        .strip_suffix(" PATHWAY")
        .map(str::to_string)
        .unwrap_or(upper)
}

impl PathwayMap {
    pub fn load(path: &Path) -> OntologyResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| OntologyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> OntologyResult<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        Self::from_groups(raw)
    }

    pub fn from_groups<I, S, G>(groups: I) -> OntologyResult<Self>
    where
        I: IntoIterator<Item = (S, G)>,
        S: AsRef<str>,
        G: IntoIterator,
        G::Item: AsRef<str>,
    {
        let mut out = BTreeMap::new();
        for (name, genes) in groups {
            let key = pathway_key(name.as_ref());
            if key.is_empty() {
                return Err(OntologyError::InvalidPathways("empty pathway name".into()));
            }
            let genes: BTreeSet<String> = genes
                .into_iter()
                .map(|g| g.as_ref().trim().to_uppercase())
                .filter(|g| !g.is_empty())
                .collect();
            if genes.is_empty() {
                return Err(OntologyError::InvalidPathways(format!("{key} has no genes")));
            }
            if out.insert(key.clone(), genes).is_some() {
                return Err(OntologyError::InvalidPathways(format!("duplicate entry {key}")));
            }
        }
        Ok(Self { groups: out })
    }

    pub fn genes(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(&pathway_key(name))
    }

    pub fn is_known(&self, name: &str) -> bool {
        self.groups.contains_key(&pathway_key(name))
    }

    pub fn contains_gene(&self, name: &str, gene: &str) -> bool {
        self.genes(name)
            .is_some_and(|g| g.contains(&gene.to_uppercase()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    /// Entries whose gene set contains `gene`.
    pub fn containing(&self, gene: &str) -> Vec<&str> {
        let gene = gene.to_uppercase();
        self.groups
            .iter()
            .filter(|(_, g)| g.contains(&gene))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Entries whose gene set contains every gene in `genes`.
    pub fn covering(&self, genes: &BTreeSet<String>) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|(_, g)| genes.is_subset(g))
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_normalize() {
        let m = PathwayMap::from_json(r#"{"RAS/MAPK pathway": ["kras", "NRAS"]}"#).unwrap();
        assert!(m.contains_gene("ras/mapk", "KRAS"));
        assert!(m.is_known("RAS/MAPK Pathway"));
        assert_eq!(m.containing("nras"), vec!["RAS/MAPK"]);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(PathwayMap::from_json(r#"{"X": []}"#).is_err());
        assert!(PathwayMap::from_groups(vec![("a", vec!["B"]), ("A pathway", vec!["C"])]).is_err());
    }
}
