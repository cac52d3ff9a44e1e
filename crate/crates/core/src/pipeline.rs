//! One episode from input to record: build (or skip) the graph, map
//! indicators, score.

use std::sync::Arc;

use crate::backend::{BackendError, BackendProfile, ConsequenceProposer, Gateway, IndicatorLinker};
use crate::config::{Mode, RunConfig};
use crate::dag::{build_dag, TextSimilarity, TokenJaccard};
use crate::mapper::{derive_flagged_set, map_indicators};
use crate::model::{validate_episode, ConsequenceDag, PolicyEpisode, Violation};
use crate::record::{EpisodeInput, EpisodeRecord, EpisodeStatus, RecordClock, Timestamps};
use crate::vocab::IndicatorVocabulary;
use crate::EpisodeMetrics;

/// Everything needed to evaluate episodes under one configuration. Cheap to
/// share between worker threads.
#[derive(Clone)]
pub struct Evaluator {
    pub vocab: Arc<IndicatorVocabulary>,
    pub config: RunConfig,
    pub proposer: Arc<dyn ConsequenceProposer>,
    pub linker: Arc<dyn IndicatorLinker>,
    pub similarity: Arc<dyn TextSimilarity>,
    pub clock: RecordClock,
}

impl Evaluator {
    pub fn new(
        vocab: Arc<IndicatorVocabulary>,
        config: RunConfig,
        proposer: Arc<dyn ConsequenceProposer>,
        linker: Arc<dyn IndicatorLinker>,
    ) -> Self {
        let clock = RecordClock::for_backend(config.backend);
        Self {
            vocab,
            config,
            proposer,
            linker,
            similarity: Arc::new(TokenJaccard),
            clock,
        }
    }

    /// Uses one gateway for both calls.
    pub fn with_gateway(vocab: Arc<IndicatorVocabulary>, config: RunConfig, gateway: Arc<Gateway>) -> Self {
        Self::new(vocab, config, gateway.clone(), gateway)
    }

    /// Connects the backend named in `config` with default pacing.
    pub fn connect(vocab: Arc<IndicatorVocabulary>, config: RunConfig) -> Result<Self, BackendError> {
        let gateway = Gateway::connect(&BackendProfile::from_config(&config))?;
        Ok(Self::with_gateway(vocab, config, Arc::new(gateway)))
    }

    pub fn with_clock(mut self, clock: RecordClock) -> Self {
        self.clock = clock;
        self
    }

    fn record(&self, episode: &PolicyEpisode, status: EpisodeStatus) -> EpisodeRecord {
        let now = self.clock.now();
        EpisodeRecord {
            episode_id: episode.episode_id.clone(),
            input: EpisodeInput::from(episode),
            dag: None,
            impacts: None,
            metrics: None,
            status,
            diagnostics: Vec::new(),
            config: self.config.clone(),
            timestamps: Timestamps {
                started_at: now,
                finished_at: now,
            },
        }
    }

    /// Status-only record for a row that was not processed.
    pub fn skipped(&self, episode: &PolicyEpisode, violations: &[Violation]) -> EpisodeRecord {
        let message = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        self.record(episode, EpisodeStatus::skipped(message))
    }

    /// Runs one episode. Never panics on backend trouble: failures come back
    /// as an error record with diagnostics.
    pub fn evaluate(&self, episode: &PolicyEpisode) -> EpisodeRecord {
        let violations = validate_episode(episode, &self.vocab);
        if !violations.is_empty() {
            return self.skipped(episode, &violations);
        }
        let started_at = self.clock.now();
        let mut diagnostics = Vec::new();

        let dag = match self.config.mode {
            Mode::Baseline => Ok(ConsequenceDag::root_only(&episode.description)),
            Mode::Pipeline => build_dag(
                episode,
                &self.config,
                self.proposer.as_ref(),
                self.similarity.as_ref(),
                &mut diagnostics,
            )
            .map_err(|e| e.to_string()),
        };
        let outcome = dag.and_then(|dag| {
            map_indicators(
                &dag,
                &self.vocab,
                episode,
                &self.config,
                self.linker.as_ref(),
                &mut diagnostics,
            )
            .map(|impacts| (dag, impacts))
            .map_err(|e| e.to_string())
        });

        let mut record = match outcome {
            Ok((dag, impacts)) => {
                let annotated = !episode.government_focus.is_empty() || !episode.relevance_set.is_empty();
                let metrics = annotated.then(|| {
                    EpisodeMetrics::compute(
                        &derive_flagged_set(&impacts),
                        &episode.government_focus,
                        &episode.relevance_set,
                    )
                });
                let mut r = self.record(episode, EpisodeStatus::ok());
                r.dag = Some(dag);
                r.impacts = Some(impacts);
                r.metrics = metrics;
                r
            }
            Err(message) => self.record(episode, EpisodeStatus::error(message)),
        };
        record.diagnostics = diagnostics;
        record.timestamps = Timestamps {
            started_at,
            finished_at: self.clock.now(),
        };
        record
    }
}
