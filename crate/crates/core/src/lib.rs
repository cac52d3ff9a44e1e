//! Policy consequence graphs and indicator impact scoring.
//!
//! A [`PolicyEpisode`] is expanded into a layered [`ConsequenceDag`] by a
//! language-model backend, every indicator in the [`IndicatorVocabulary`] is
//! checked against the graph, and the flagged set is scored against the
//! episode's reference sets. [`batch`] runs whole corpora; [`pipeline`] runs
//! one episode.

pub mod backend;
pub mod batch;
pub mod config;
pub mod dag;
pub mod ingest;
pub mod mapper;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod record;
pub mod vocab;

use num_rational::Ratio;

pub use batch::{compare_runs, run_batch, run_batch_with, BatchError, BatchOptions, RunSummary, StatusCounts};
pub use config::{BackendKind, ConfigError, ConfigOverrides, Mode, RunConfig};
pub use dag::build_dag;
pub use ingest::{read_corpus, CorpusRow, IngestError, RowOutcome};
pub use mapper::{derive_flagged_set, map_indicators};
pub use metrics::{ComparisonTable, MetricKind};
pub use model::{ConsequenceDag, ConsequenceNode, Direction, IndicatorImpact, PolicyEpisode, Violation};
pub use pipeline::Evaluator;
pub use record::{EpisodeRecord, EpisodeStatus, StatusKind};
pub use vocab::{Indicator, IndicatorVocabulary};

/// Per-episode scores as stored in records.
pub type EpisodeMetrics = metrics::Scores<f64>;
/// Exact scores, for checking float results.
pub type ExactMetrics = metrics::Scores<Ratio<u64>>;
pub type MetricAggregate = metrics::Aggregate<f64>;
