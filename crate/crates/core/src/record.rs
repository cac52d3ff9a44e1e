//! Per-episode output record and its canonical JSON form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, RunConfig};
use crate::model::{ConsequenceDag, IndicatorImpact, PolicyEpisode};
use crate::EpisodeMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusKind {
    Ok,
    Skipped,
    Error,
}

impl fmt::Display for StatusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatusKind::Ok => "ok",
            StatusKind::Skipped => "skipped",
            StatusKind::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub status: StatusKind,
    pub message: String,
}

impl EpisodeStatus {
    pub fn ok() -> Self {
        Self {
            status: StatusKind::Ok,
            message: "completed".to_string(),
        }
    }

    pub fn skipped(message: impl Into<String>) -> Self {
        Self {
            status: StatusKind::Skipped,
            message: message.into(),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: StatusKind::Error,
            message: message.into(),
        }
    }
}

/// The episode's inputs, echoed verbatim into the record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeInput {
    pub description: String,
    pub context: BTreeMap<String, String>,
    pub government_focus: BTreeSet<String>,
    pub relevance_set: BTreeSet<String>,
}

impl From<&PolicyEpisode> for EpisodeInput {
    fn from(ep: &PolicyEpisode) -> Self {
        Self {
            description: ep.description.clone(),
            context: ep.context.clone(),
            government_focus: ep.government_focus.clone(),
            relevance_set: ep.relevance_set.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

/// Source of record timestamps. Stub runs use a fixed instant so that their
/// output is byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordClock {
    System,
    Fixed(DateTime<Utc>),
}

impl RecordClock {
    pub fn for_backend(kind: BackendKind) -> Self {
        match kind {
            BackendKind::Remote => RecordClock::System,
            BackendKind::Stub => RecordClock::Fixed(DateTime::<Utc>::UNIX_EPOCH),
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            RecordClock::System => Utc::now(),
            RecordClock::Fixed(t) => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub input: EpisodeInput,
    #[serde(default)]
    pub dag: Option<ConsequenceDag>,
    #[serde(default)]
    pub impacts: Option<Vec<IndicatorImpact>>,
    #[serde(default)]
    pub metrics: Option<EpisodeMetrics>,
    pub status: EpisodeStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub config: RunConfig,
    pub timestamps: Timestamps,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("ok record is missing its {0}")]
    MissingPayload(&'static str),
    #[error("{0} record carries a payload")]
    UnexpectedPayload(StatusKind),
    #[error("metrics present although the episode has no reference sets")]
    UnannotatedMetrics,
    #[error("non-ok record has an empty status message")]
    EmptyMessage,
    #[error("impact entry for {0} is inconsistent with the graph")]
    BadImpact(String),
    #[error("metric {0} is out of range")]
    MetricRange(&'static str),
    #[error("malformed record JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl EpisodeRecord {
    pub fn is_ok(&self) -> bool {
        self.status.status == StatusKind::Ok
    }

    /// Checks the status/payload coupling and per-entry consistency.
    pub fn check(&self) -> Result<(), RecordError> {
        match self.status.status {
            StatusKind::Ok => {
                let dag = self.dag.as_ref().ok_or(RecordError::MissingPayload("dag"))?;
                let impacts = self.impacts.as_ref().ok_or(RecordError::MissingPayload("impacts"))?;
                let annotated = !self.input.government_focus.is_empty() || !self.input.relevance_set.is_empty();
                let metrics = match (&self.metrics, annotated) {
                    (Some(m), true) => m,
                    (None, false) => return self.check_impacts(dag, impacts),
                    (None, true) => return Err(RecordError::MissingPayload("metrics")),
                    (Some(_), false) => return Err(RecordError::UnannotatedMetrics),
                };
                self.check_impacts(dag, impacts)?;
                let unit = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && (0.0..=1.0).contains(&x));
                if !unit(metrics.coverage) {
                    return Err(RecordError::MetricRange("coverage"));
                }
                if !unit(metrics.discovery) {
                    return Err(RecordError::MetricRange("discovery"));
                }
                if !metrics.focus_ratio.is_none_or(|x| x.is_finite() && x >= 0.0) {
                    return Err(RecordError::MetricRange("focus_ratio"));
                }
            }
            other => {
                if self.dag.is_some() || self.impacts.is_some() || self.metrics.is_some() {
                    return Err(RecordError::UnexpectedPayload(other));
                }
                if self.status.message.trim().is_empty() {
                    return Err(RecordError::EmptyMessage);
                }
            }
        }
        Ok(())
    }

    fn check_impacts(&self, dag: &ConsequenceDag, impacts: &[IndicatorImpact]) -> Result<(), RecordError> {
        let cap = self.config.max_links_per_node as usize;
        match impacts.iter().find(|i| !i.is_consistent(dag, cap)) {
            Some(bad) => Err(RecordError::BadImpact(bad.indicator_id.clone())),
            None => Ok(()),
        }
    }

    /// Canonical text: pretty JSON with fixed key order and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("records always serialize");
        text.push('\n');
        text
    }

    /// Parses and checks a record.
    pub fn from_json(text: &str) -> Result<Self, RecordError> {
        let record: EpisodeRecord = serde_json::from_str(text)?;
        record.check()?;
        Ok(record)
    }
}
