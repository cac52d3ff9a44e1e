//! Whole-corpus runs and cross-run comparison.

use std::fs;
use std::io::{self, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{AuditLog, BackendError, BackendProfile, Gateway, PromptSet};
use crate::config::{ConfigError, RunConfig};
use crate::ingest::{read_corpus, CorpusRow, IngestError, RowOutcome};
use crate::metrics::{aggregate_records, comparison_table, ComparisonTable, MetricsError};
use crate::model::Violation;
use crate::pipeline::Evaluator;
use crate::record::{EpisodeRecord, RecordError, StatusKind};
use crate::vocab::IndicatorVocabulary;
use crate::MetricAggregate;

pub const SUMMARY_FILE: &str = "summary.json";
pub const AUDIT_FILE: &str = "audit.log";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("output directory {0} is not empty; pass --overwrite to replace its files")]
    OutputExists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Record {
        path: PathBuf,
        #[source]
        source: RecordError,
    },
    #[error("{0} has no summary.json; is it a run directory?")]
    NotARun(PathBuf),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("status counts do not add up: {0:?}")]
    Conservation(StatusCounts),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub ok: usize,
    pub skipped: usize,
    pub error: usize,
    pub total: usize,
}

impl StatusCounts {
    pub fn add(&mut self, status: StatusKind) {
        match status {
            StatusKind::Ok => self.ok += 1,
            StatusKind::Skipped => self.skipped += 1,
            StatusKind::Error => self.error += 1,
        }
        self.total += 1;
    }

    pub fn is_conserved(&self) -> bool {
        self.ok + self.skipped + self.error == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Hash of the configuration and the input file contents.
    pub run_id: String,
    /// File name of the corpus.
    pub input: String,
    pub counts: StatusCounts,
    pub metrics: Vec<MetricAggregate>,
    pub config: RunConfig,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub duration_ms: i64,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        text
    }

    /// Human-readable counts and per-metric statistics.
    pub fn to_text(&self) -> String {
        let c = &self.counts;
        let mut out = format!(
            "run {}: {} rows, ok={} skipped={} error={}\n",
            self.run_id, c.total, c.ok, c.skipped, c.error
        );
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        for a in &self.metrics {
            out.push_str(&format!(
                "  {:<34} mean {:>6}  sd {:>6}  min {:>6}  max {:>6}  (n={}/{})\n",
                a.metric.label(),
                fmt(a.mean),
                fmt(a.std_dev),
                fmt(a.min),
                fmt(a.max),
                a.n_defined,
                a.n_total
            ));
        }
        out
    }
}

/// Settings for a batch run beyond the [`RunConfig`] recorded in each file.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub sheet: Option<String>,
    pub overwrite: bool,
    pub concurrency: usize,
    pub audit: bool,
    pub vocab: Arc<IndicatorVocabulary>,
    pub prompt_dir: Option<PathBuf>,
    /// Requests per second; `None` keeps the backend default.
    pub rate_limit: Option<f64>,
    pub timeout: Option<Duration>,
}

impl BatchOptions {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            output_dir: output_dir.into(),
            sheet: None,
            overwrite: false,
            concurrency: 4,
            audit: false,
            vocab: Arc::new(IndicatorVocabulary::default_vocabulary()),
            prompt_dir: None,
            rate_limit: None,
            timeout: None,
        }
    }
}

/// Output file name for a row. Rows whose id cannot name a file get
/// `row-<n>.json`.
pub fn record_file_name(row: &CorpusRow) -> String {
    let id_problem = match &row.outcome {
        RowOutcome::Episode(_) => false,
        RowOutcome::Skip { violations, .. } => violations.iter().any(|v| {
            matches!(
                v,
                Violation::MissingEpisodeId | Violation::InvalidEpisodeId(_) | Violation::DuplicateEpisodeId(_)
            )
        }),
    };
    if id_problem {
        format!("row-{}.json", row.row)
    } else {
        format!("{}.json", row.episode().episode_id)
    }
}

fn prepare_output(dir: &Path, overwrite: bool) -> Result<(), BatchError> {
    match fs::read_dir(dir) {
        Ok(mut entries) => {
            if entries.next().is_some() && !overwrite {
                return Err(BatchError::OutputExists(dir.to_path_buf()));
            }
            Ok(())
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => fs::create_dir_all(dir).map_err(io_err(dir)),
        Err(e) => Err(io_err(dir)(e)),
    }
}

/// Writes via a temp file in the same directory and renames into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), BatchError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents.as_bytes()).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn run_id(config: &RunConfig, input: &Path) -> Result<String, BatchError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(fs::read(input).map_err(io_err(input))?);
    Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Runs a corpus with the backend named in `config`.
///
/// Configuration, ingest and credential problems are reported before
/// anything is written.
pub fn run_batch(options: &BatchOptions, config: &RunConfig) -> Result<RunSummary, BatchError> {
    config.validate()?;
    let rows = read_corpus(&options.input, &options.vocab, options.sheet.as_deref())?;

    let mut profile = BackendProfile::from_config(config);
    if let Some(rate) = options.rate_limit {
        profile.rate_limit = rate;
    }
    if let Some(timeout) = options.timeout {
        profile.timeout = timeout;
    }
    let mut gateway = Gateway::connect(&profile)?;
    if let Some(dir) = &options.prompt_dir {
        let prompts = PromptSet::from_dir(dir).map_err(|e| BackendError::Config(e.to_string()))?;
        gateway = gateway.with_prompts(Arc::new(prompts));
    }

    prepare_output(&options.output_dir, options.overwrite)?;
    if options.audit {
        let path = options.output_dir.join(AUDIT_FILE);
        let log = AuditLog::create(&path).map_err(io_err(&path))?;
        gateway = gateway.with_audit(Some(Arc::new(log)));
    }
    let evaluator = Evaluator::with_gateway(options.vocab.clone(), config.clone(), Arc::new(gateway));
    process_rows(options, &rows, &evaluator)
}

/// Runs a corpus with a caller-supplied evaluator (custom backends, fixed
/// clocks). The audit option is ignored here.
pub fn run_batch_with(options: &BatchOptions, evaluator: &Evaluator) -> Result<RunSummary, BatchError> {
    evaluator.config.validate()?;
    let rows = read_corpus(&options.input, &evaluator.vocab, options.sheet.as_deref())?;
    prepare_output(&options.output_dir, options.overwrite)?;
    process_rows(options, &rows, evaluator)
}

fn evaluate_row(evaluator: &Evaluator, row: &CorpusRow) -> EpisodeRecord {
    let result = panic::catch_unwind(AssertUnwindSafe(|| match &row.outcome {
        RowOutcome::Episode(ep) => evaluator.evaluate(ep),
        RowOutcome::Skip { episode, violations } => evaluator.skipped(episode, violations),
    }));
    result.unwrap_or_else(|payload| {
        let what = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        let mut r = evaluator.skipped(row.episode(), &[]);
        r.status = crate::record::EpisodeStatus::error(format!("internal error: {what}"));
        r
    })
}

fn process_rows(options: &BatchOptions, rows: &[CorpusRow], evaluator: &Evaluator) -> Result<RunSummary, BatchError> {
    let started_at = evaluator.clock.now();
    let out = &options.output_dir;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EpisodeRecord>>> = Mutex::new(vec![None; rows.len()]);
    let failure: Mutex<Option<BatchError>> = Mutex::new(None);
    let workers = options.concurrency.clamp(1, rows.len().max(1));

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(row) = rows.get(i) else { break };
                let record = evaluate_row(evaluator, row);
                let path = out.join(record_file_name(row));
                if let Err(e) = write_atomic(&path, &record.to_json()) {
                    failure.lock().unwrap().get_or_insert(e);
                }
                tracing::debug!(episode = %record.episode_id, status = %record.status.status, "episode done");
                slots.lock().unwrap()[i] = Some(record);
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    let records: Vec<EpisodeRecord> = slots.into_inner().unwrap().into_iter().flatten().collect();
    let mut counts = StatusCounts::default();
    for r in &records {
        counts.add(r.status.status);
    }
    if !counts.is_conserved() || counts.total != rows.len() {
        return Err(BatchError::Conservation(counts));
    }
    let finished_at = evaluator.clock.now();
    let summary = RunSummary {
        run_id: run_id(&evaluator.config, &options.input)?,
        input: options
            .input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        counts,
        metrics: aggregate_records(&records),
        config: evaluator.config.clone(),
        started_at,
        finished_at,
        duration_ms: (finished_at - started_at).num_milliseconds(),
    };
    write_atomic(&out.join(SUMMARY_FILE), &summary.to_json())?;
    Ok(summary)
}

/// Loads every episode record of a run directory, sorted by file name.
pub fn load_run(dir: &Path) -> Result<Vec<EpisodeRecord>, BatchError> {
    if !dir.join(SUMMARY_FILE).is_file() {
        return Err(BatchError::NotARun(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != SUMMARY_FILE))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            EpisodeRecord::from_json(&text).map_err(|source| BatchError::Record {
                path: p.clone(),
                source,
            })
        })
        .collect()
}

/// Compares named run directories and writes the CSV table to `out`.
pub fn compare_runs(runs: &[(String, PathBuf)], out: &Path) -> Result<ComparisonTable, BatchError> {
    let loaded = runs
        .iter()
        .map(|(name, dir)| Ok((name.clone(), load_run(dir)?)))
        .collect::<Result<Vec<_>, BatchError>>()?;
    let table = comparison_table(&loaded)?;
    write_atomic(out, &table.to_csv())?;
    Ok(table)
}
