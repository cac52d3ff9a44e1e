//! Set-based evaluation measures and their corpus aggregation.
//!
//! With `S` the system-flagged set, `G` the government focus set and `R` the
//! relevance set:
//!
//! * coverage    = |S ∩ G| / |G|
//! * discovery   = |S ∩ (R \ G)| / |R \ G|
//! * focus ratio = |S ∩ R| / |G ∩ R|
//!
//! Each is `None` when its denominator is empty. The measures are generic
//! over [`MetricScalar`], so the same code yields `f64`, `f32` or exact
//! rationals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Debug, Write as _};

use num_rational::Ratio;
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::EpisodeRecord;

/// A number type that can represent a ratio of two counts.
pub trait MetricScalar: Copy + PartialOrd + Debug {
    /// `numerator / denominator`; callers guarantee `denominator > 0`.
    fn from_counts(numerator: usize, denominator: usize) -> Self;
}

impl MetricScalar for f64 {
    fn from_counts(numerator: usize, denominator: usize) -> Self {
        numerator as f64 / denominator as f64
    }
}

impl MetricScalar for f32 {
    fn from_counts(numerator: usize, denominator: usize) -> Self {
        (numerator as f64 / denominator as f64) as f32
    }
}

macro_rules! impl_ratio_scalar {
    ($($int:ty),*) => {$(
        impl MetricScalar for Ratio<$int> {
            fn from_counts(numerator: usize, denominator: usize) -> Self {
                Ratio::new(numerator as $int, denominator as $int)
            }
        }
    )*};
}

impl_ratio_scalar!(u32, u64, usize);

fn ratio<T: MetricScalar>(numerator: usize, denominator: usize) -> Option<T> {
    (denominator > 0).then(|| T::from_counts(numerator, denominator))
}

/// Expected-indicator coverage: share of `G` that the system flags.
pub fn coverage<T: MetricScalar, K: Ord>(flagged: &BTreeSet<K>, focus: &BTreeSet<K>) -> Option<T> {
    ratio(flagged.intersection(focus).count(), focus.len())
}

/// Overlooked-indicator discovery: share of `R \ G` that the system flags.
pub fn discovery<T: MetricScalar, K: Ord>(
    flagged: &BTreeSet<K>,
    focus: &BTreeSet<K>,
    relevant: &BTreeSet<K>,
) -> Option<T> {
    let overlooked: Vec<&K> = relevant.difference(focus).collect();
    let found = overlooked.iter().filter(|k| flagged.contains(k)).count();
    ratio(found, overlooked.len())
}

/// Model/government focus ratio on the relevant subset.
pub fn focus_ratio<T: MetricScalar, K: Ord>(
    flagged: &BTreeSet<K>,
    focus: &BTreeSet<K>,
    relevant: &BTreeSet<K>,
) -> Option<T> {
    ratio(
        flagged.intersection(relevant).count(),
        focus.intersection(relevant).count(),
    )
}

/// The three per-episode measures; `None` serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores<T> {
    pub coverage: Option<T>,
    pub discovery: Option<T>,
    pub focus_ratio: Option<T>,
}

impl<T> Default for Scores<T> {
    fn default() -> Self {
        Self {
            coverage: None,
            discovery: None,
            focus_ratio: None,
        }
    }
}

impl<T: MetricScalar> Scores<T> {
    pub fn compute<K: Ord>(flagged: &BTreeSet<K>, focus: &BTreeSet<K>, relevant: &BTreeSet<K>) -> Self {
        Self {
            coverage: coverage(flagged, focus),
            discovery: discovery(flagged, focus, relevant),
            focus_ratio: focus_ratio(flagged, focus, relevant),
        }
    }

    pub fn get(&self, metric: MetricKind) -> Option<T> {
        match metric {
            MetricKind::Coverage => self.coverage,
            MetricKind::Discovery => self.discovery,
            MetricKind::FocusRatio => self.focus_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Coverage,
    Discovery,
    FocusRatio,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Coverage, MetricKind::Discovery, MetricKind::FocusRatio];

    pub fn key(self) -> &'static str {
        match self {
            MetricKind::Coverage => "coverage",
            MetricKind::Discovery => "discovery",
            MetricKind::FocusRatio => "focus_ratio",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Coverage => "Expected-indicator coverage score",
            MetricKind::Discovery => "Overlooked-indicator discovery rate",
            MetricKind::FocusRatio => "Model-government focus ratio",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Mean, population standard deviation and range over the defined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate<T> {
    pub metric: MetricKind,
    pub mean: Option<T>,
    pub std_dev: Option<T>,
    pub min: Option<T>,
    pub max: Option<T>,
    pub n_defined: usize,
    pub n_total: usize,
}

/// Aggregates per-episode values, excluding nulls.
pub fn aggregate<T: Float>(metric: MetricKind, values: &[Option<T>]) -> Aggregate<T> {
    let defined: Vec<T> = values.iter().flatten().copied().collect();
    let mut agg = Aggregate {
        metric,
        mean: None,
        std_dev: None,
        min: None,
        max: None,
        n_defined: defined.len(),
        n_total: values.len(),
    };
    if defined.is_empty() {
        return agg;
    }
    let n = T::from(defined.len()).expect("count fits the float type");
    let min = defined.iter().copied().fold(T::infinity(), T::min);
    let max = defined.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = defined.iter().copied().fold(T::zero(), |a, b| a + b);
    // rounding in the sum can push the mean a hair outside [min, max]
    let mean = (sum / n).max(min).min(max);
    let var = defined
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .fold(T::zero(), |a, b| a + b)
        / n;
    agg.mean = Some(mean);
    agg.std_dev = Some(var.sqrt());
    agg.min = Some(min);
    agg.max = Some(max);
    agg
}

/// Aggregates all three measures over a set of records; non-ok records count
/// toward `n_total` as nulls.
pub fn aggregate_records(records: &[EpisodeRecord]) -> Vec<Aggregate<f64>> {
    MetricKind::ALL
        .iter()
        .map(|&metric| {
            let values: Vec<Option<f64>> = records
                .iter()
                .map(|r| r.metrics.as_ref().and_then(|m| m.get(metric)))
                .collect();
            aggregate(metric, &values)
        })
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("run {run:?} is missing episodes: {}", missing.join(", "))]
    EpisodeMismatch { run: String, missing: Vec<String> },
    #[error("no runs to compare")]
    NoRuns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub system: String,
    pub aggregate: Aggregate<f64>,
}

/// System-by-metric comparison with mean, std. dev., min and max columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const CSV_COLUMNS: [&str; 8] = [
    "system",
    "metric",
    "mean",
    "std_dev",
    "min",
    "max",
    "n_defined",
    "n_total",
];

/// Builds the comparison table. All runs must cover the same episode ids.
pub fn comparison_table(runs: &[(String, Vec<EpisodeRecord>)]) -> Result<ComparisonTable, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let all: BTreeSet<&str> = runs
        .iter()
        .flat_map(|(_, recs)| recs.iter().map(|r| r.episode_id.as_str()))
        .collect();
    for (name, records) in runs {
        let have: BTreeSet<&str> = records.iter().map(|r| r.episode_id.as_str()).collect();
        let missing: Vec<String> = all.difference(&have).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(MetricsError::EpisodeMismatch {
                run: name.clone(),
                missing,
            });
        }
    }
    let rows = runs
        .iter()
        .flat_map(|(name, records)| {
            aggregate_records(records)
                .into_iter()
                .map(move |aggregate| ComparisonRow {
                    system: name.clone(),
                    aggregate,
                })
        })
        .collect();
    Ok(ComparisonTable { rows })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    /// CSV with the fixed column order in [`CSV_COLUMNS`]; nulls are empty cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for row in &self.rows {
            let a = &row.aggregate;
            w.write_record([
                row.system.clone(),
                a.metric.key().to_string(),
                cell(a.mean),
                cell(a.std_dev),
                cell(a.min),
                cell(a.max),
                a.n_defined.to_string(),
                a.n_total.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// Fixed-width text rendering with three decimals.
    pub fn to_text(&self) -> String {
        let fmt3 = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into());
        let sys_w = self
            .rows
            .iter()
            .map(|r| r.system.chars().count())
            .chain(std::iter::once("System".len()))
            .max()
            .unwrap_or(6);
        let metric_w = MetricKind::ALL.iter().map(|m| m.label().len()).max().unwrap_or(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<sys_w$}  {:<metric_w$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "System", "Metric", "Mean", "Std. dev.", "Min", "Max"
        );
        let mut last: Option<&str> = None;
        for row in &self.rows {
            let a = &row.aggregate;
            let name = if last == Some(row.system.as_str()) {
                ""
            } else {
                row.system.as_str()
            };
            last = Some(row.system.as_str());
            let _ = writeln!(
                out,
                "{:<sys_w$}  {:<metric_w$}  {:>9}  {:>9}  {:>9}  {:>9}",
                name,
                a.metric.label(),
                fmt3(a.mean),
                fmt3(a.std_dev),
                fmt3(a.min),
                fmt3(a.max)
            );
        }
        out
    }

    /// Rows keyed by `(system, metric)`.
    pub fn lookup(&self) -> BTreeMap<(&str, MetricKind), &Aggregate<f64>> {
        self.rows
            .iter()
            .map(|r| ((r.system.as_str(), r.aggregate.metric), &r.aggregate))
            .collect()
    }
}
