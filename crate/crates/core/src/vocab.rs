//! The fixed indicator vocabulary every consequence graph is aligned to.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_VOCABULARY: &str = include_str!("../data/vocabulary.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub id: String,
    pub name: String,
    pub definition: String,
}

impl Indicator {
    pub fn new(id: impl Into<String>, name: impl Into<String>, definition: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            definition: definition.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("vocabulary is empty")]
    Empty,
    #[error("indicator id {0:?} is empty or contains whitespace")]
    BadId(String),
    #[error("duplicate indicator id {0:?}")]
    Duplicate(String),
    #[error("cannot read vocabulary file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed vocabulary file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Ordered, duplicate-free list of indicators. Order is significant: impact
/// lists follow it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndicatorVocabulary {
    pub version: String,
    indicators: Vec<Indicator>,
}

#[derive(Deserialize)]
struct RawVocabulary {
    version: String,
    indicators: Vec<Indicator>,
}

impl<'de> Deserialize<'de> for IndicatorVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawVocabulary::deserialize(deserializer)?;
        IndicatorVocabulary::new(raw.version, raw.indicators).map_err(serde::de::Error::custom)
    }
}

impl IndicatorVocabulary {
    pub fn new(version: impl Into<String>, indicators: Vec<Indicator>) -> Result<Self, VocabularyError> {
        if indicators.is_empty() {
            return Err(VocabularyError::Empty);
        }
        let mut seen = HashSet::new();
        for ind in &indicators {
            if ind.id.is_empty() || ind.id.chars().any(char::is_whitespace) {
                return Err(VocabularyError::BadId(ind.id.clone()));
            }
            if !seen.insert(ind.id.as_str()) {
                return Err(VocabularyError::Duplicate(ind.id.clone()));
            }
        }
        Ok(Self {
            version: version.into(),
            indicators,
        })
    }

    /// The bundled 19-indicator list (growth, employment, debt, external,
    /// distribution, social spending and environment).
    pub fn default_vocabulary() -> Self {
        serde_json::from_str(DEFAULT_VOCABULARY).expect("bundled vocabulary is valid")
    }

    /// Loads a vocabulary file: `{"version": ..., "indicators": [{id, name, definition}, ...]}`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, VocabularyError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Indicator> {
        self.indicators.iter().find(|i| i.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.indicators.iter().map(|i| i.id.as_str())
    }
}
