//! Versioned JSON form of a knowledge base and its weights.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{Predicate, Proposition};
use crate::factors::WeightVector;
use crate::kb::{ConjoinedImplicationLink, KbError, KnowledgeBase, PredicateImplicationLink, RoleSetMapping};
use crate::network::{AnalyticModel, Parameters};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("format version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { found: u64 },
    #[error("record has no format_version")]
    Unversioned,
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("record has no analytic model")]
    NoAnalytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseRecord {
    pub predicate: Predicate,
    pub mapping: RoleSetMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub premises: Vec<PremiseRecord>,
    pub conclusion: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBaseRecord {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    /// Type name to entity ids.
    #[serde(default)]
    pub types: BTreeMap<String, Vec<String>>,
    pub links: Vec<LinkRecord>,
    #[serde(default)]
    pub weights: WeightVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticModel>,
    /// Default query targets.
    #[serde(default)]
    pub targets: Vec<Proposition>,
}

impl KnowledgeBaseRecord {
    pub fn new(name: impl Into<String>, kb: &KnowledgeBase, weights: WeightVector) -> Self {
        let links = kb
            .links()
            .map(|l| LinkRecord {
                premises: l
                    .premises()
                    .iter()
                    .map(|p| PremiseRecord {
                        predicate: p.premise().clone(),
                        mapping: p.mapping().clone(),
                    })
                    .collect(),
                conclusion: l.conclusion().clone(),
            })
            .collect();
        KnowledgeBaseRecord {
            format_version: FORMAT_VERSION,
            name: name.into(),
            types: BTreeMap::new(),
            links,
            weights,
            analytic: None,
            targets: Vec::new(),
        }
    }

    pub fn knowledge_base(&self) -> Result<KnowledgeBase, RecordError> {
        let mut kb = KnowledgeBase::new();
        for l in &self.links {
            let premises = l
                .premises
                .iter()
                .map(|p| PredicateImplicationLink::new(p.predicate.clone(), l.conclusion.clone(), p.mapping.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            kb.add_link(ConjoinedImplicationLink::new(premises)?);
        }
        Ok(kb)
    }

    pub fn learned(&self) -> Parameters {
        Parameters::Learned(self.weights.clone())
    }

    pub fn analytic(&self) -> Result<Parameters, RecordError> {
        self.analytic
            .clone()
            .map(Parameters::Analytic)
            .ok_or(RecordError::NoAnalytic)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes") + "\n"
    }

    /// Checks the version before decoding the rest.
    pub fn from_json(text: &str) -> Result<Self, RecordError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            None => return Err(RecordError::Unversioned),
            Some(v) if v != u64::from(FORMAT_VERSION) => return Err(RecordError::Version { found: v }),
            Some(_) => {}
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RecordError> {
        std::fs::write(path, self.to_json()).map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        KnowledgeBaseRecord::from_json(&text)
    }
}
