use std::collections::{BTreeMap, BTreeSet};

use super::AnnotationError;

pub const DEFAULT_VOCABULARY: &str = include_str!("../../data/closed_vocab.json");

/// Curated (verb, noun) pairs grouped into named clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedVocabulary {
    clusters: BTreeMap<String, Vec<(String, String)>>,
    members: BTreeSet<(String, String)>,
}

impl Default for ClosedVocabulary {
    fn default() -> Self {
        Self::from_json(DEFAULT_VOCABULARY).expect("builtin vocabulary is valid")
    }
}

impl ClosedVocabulary {
    pub fn from_json(json: &str) -> Result<Self, AnnotationError> {
        let raw: BTreeMap<String, Vec<(String, String)>> =
            serde_json::from_str(json).map_err(|e| AnnotationError::Vocabulary(e.to_string()))?;
        Self::new(raw)
    }

    pub fn new(clusters: BTreeMap<String, Vec<(String, String)>>) -> Result<Self, AnnotationError> {
        if clusters.is_empty() {
            return Err(AnnotationError::Vocabulary("no clusters".into()));
        }
        let mut members = BTreeSet::new();
        for (name, pairs) in &clusters {
            if pairs.is_empty() {
                return Err(AnnotationError::Vocabulary(format!("cluster {name:?} is empty")));
            }
            for (v, n) in pairs {
                if v.trim().is_empty() || n.trim().is_empty() {
                    return Err(AnnotationError::Vocabulary(format!("blank pair in cluster {name:?}")));
                }
                if !members.insert((v.to_lowercase(), n.to_lowercase())) {
                    return Err(AnnotationError::Vocabulary(format!("duplicate pair ({v}, {n})")));
                }
            }
        }
        Ok(Self { clusters, members })
    }

    pub fn contains(&self, verb: &str, noun: &str) -> bool {
        self.members.contains(&(verb.to_lowercase(), noun.to_lowercase()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(String, String)> {
        self.members.iter()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// One line per cluster, `cluster: verb noun, verb noun`.
    pub fn listing(&self) -> String {
        self.clusters
            .iter()
            .map(|(name, pairs)| {
                let ps: Vec<String> = pairs.iter().map(|(v, n)| format!("{v} {n}")).collect();
                format!("{name}: {}", ps.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}
