use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use policygraph_core::EpisodeRecord;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    /// Allowed moves: queued→running, running→done, running→failed, and
    /// queued→failed for jobs that never got to start.
    fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Queued, JobState::Failed)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }
}

/// Public view of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobHandle {
    pub job_id: Uuid,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<EpisodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

struct Job {
    state: JobState,
    record: Option<Arc<EpisodeRecord>>,
    failure: Option<String>,
}

/// In-memory job table. Terminal jobs never change again.
#[derive(Default)]
pub struct JobStore {
    jobs: Mutex<HashMap<Uuid, Job>>,
}

impl JobStore {
    /// Adds a queued job unless `limit` jobs are already waiting.
    pub fn enqueue(&self, limit: usize) -> Option<Uuid> {
        let mut jobs = self.jobs.lock().unwrap();
        let waiting = jobs.values().filter(|j| j.state == JobState::Queued).count();
        if waiting >= limit {
            return None;
        }
        let id = Uuid::new_v4();
        jobs.insert(
            id,
            Job {
                state: JobState::Queued,
                record: None,
                failure: None,
            },
        );
        Some(id)
    }

    fn transition(&self, id: Uuid, next: JobState, record: Option<EpisodeRecord>, failure: Option<String>) {
        let mut jobs = self.jobs.lock().unwrap();
        let Some(job) = jobs.get_mut(&id) else { return };
        if !job.state.can_become(next) {
            tracing::warn!(%id, from = ?job.state, to = ?next, "ignored illegal job transition");
            return;
        }
        job.state = next;
        job.record = record.map(Arc::new);
        job.failure = failure;
    }

    pub fn start(&self, id: Uuid) {
        self.transition(id, JobState::Running, None, None);
    }

    pub fn finish(&self, id: Uuid, record: EpisodeRecord) {
        self.transition(id, JobState::Done, Some(record), None);
    }

    /// Marks a job failed, keeping the error record when there is one.
    pub fn fail(&self, id: Uuid, message: String, record: Option<EpisodeRecord>) {
        self.transition(id, JobState::Failed, record, Some(message));
    }

    pub fn handle(&self, id: Uuid) -> Option<JobHandle> {
        let jobs = self.jobs.lock().unwrap();
        jobs.get(&id).map(|j| JobHandle {
            job_id: id,
            state: j.state,
            result: j.record.as_deref().cloned(),
            failure: j.failure.clone(),
        })
    }

    /// State and record, without cloning the record.
    pub fn record(&self, id: Uuid) -> Option<(JobState, Option<Arc<EpisodeRecord>>)> {
        let jobs = self.jobs.lock().unwrap();
        jobs.get(&id).map(|j| (j.state, j.record.clone()))
    }
}
