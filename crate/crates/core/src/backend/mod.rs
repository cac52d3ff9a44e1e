//! Text-generation backend behind two capabilities: proposing consequences
//! and linking indicators.
//!
//! [`Gateway`] owns prompting, reply parsing, retries and pacing, and talks
//! to a [`Transport`]: either the remote chat-completion client or the
//! deterministic stub. Only schema-valid replies leave the gateway.

mod audit;
mod prompts;
mod remote;
mod stub;
mod throttle;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{BackendKind, RunConfig};
use crate::dag::{NodeSummary, Proposal, ProposalRequest};
use crate::model::Direction;
use crate::vocab::Indicator;

pub use audit::AuditLog;
pub use prompts::{render, PromptSet};
pub use remote::RemoteTransport;
pub use stub::{stub_generate, AdversarialProposer, StubTransport};
pub use throttle::{backoff_delay, Clock, FakeClock, RateLimiter, SystemClock};

/// Proposes children for a frontier of consequence nodes.
pub trait ConsequenceProposer: Send + Sync {
    fn propose(
        &self,
        request: &ProposalRequest,
        temperature: f64,
        diagnostics: &mut Vec<String>,
    ) -> Result<Vec<Proposal>, BackendError>;
}

/// Decides whether one indicator is affected, and through which nodes.
pub trait IndicatorLinker: Send + Sync {
    fn link(
        &self,
        query: &LinkQuery,
        link_temperature: f64,
        diagnostics: &mut Vec<String>,
    ) -> Result<LinkVerdict, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkQuery {
    pub policy: String,
    pub context: BTreeMap<String, String>,
    pub nodes: Vec<NodeSummary>,
    pub indicator: Indicator,
    pub max_links: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkVerdict {
    pub affected: bool,
    pub direction: Option<Direction>,
    pub supporting_node_ids: Vec<String>,
}

impl LinkVerdict {
    pub fn unaffected() -> Self {
        Self {
            affected: false,
            direction: None,
            supporting_node_ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Propose,
    Link,
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::Propose => "propose",
            CallKind::Link => "link",
        })
    }
}

/// Everything a transport may need for one call. The stub reads `payload`;
/// the remote client sends `system` and `prompt`.
#[derive(Debug, Clone, Copy)]
pub struct TransportRequest<'a> {
    pub kind: CallKind,
    pub payload: &'a Value,
    pub system: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub attempt: u32,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response envelope: {0}")]
    Envelope(String),
    #[error("credential unavailable: {0}")]
    Credential(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Credential(_) => false,
            TransportError::Status { status, .. } => !(400..500).contains(status) || *status == 408 || *status == 429,
            _ => true,
        }
    }
}

/// Sends one prompt and returns the raw reply text.
pub trait Transport: Send + Sync {
    fn send(&self, request: &TransportRequest<'_>) -> Result<String, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(&TransportRequest<'_>) -> Result<String, TransportError> + Send + Sync,
{
    fn send(&self, request: &TransportRequest<'_>) -> Result<String, TransportError> {
        self(request)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{kind} call failed after {attempts} attempt(s): {last}")]
    Exhausted {
        kind: CallKind,
        attempts: u32,
        last: String,
    },
    #[error("{kind} call failed: {message}")]
    Fatal { kind: CallKind, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Connection and pacing settings for a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendProfile {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model_name: String,
    pub api_key_ref: String,
    pub timeout: Duration,
    pub retry_limit: u32,
    /// Requests per second; 0 disables pacing.
    pub rate_limit: f64,
    pub seed: Option<u64>,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

impl BackendProfile {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            kind: config.backend,
            endpoint: config.api_endpoint.clone(),
            model_name: config.model_name.clone(),
            api_key_ref: config.api_key_ref.clone(),
            timeout: Duration::from_secs(60),
            retry_limit: config.retry_limit,
            rate_limit: match config.backend {
                BackendKind::Remote => 5.0,
                BackendKind::Stub => 0.0,
            },
            seed: config.random_seed,
            backoff_base: Duration::from_secs(1),
            backoff_cap: Duration::from_secs(30),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote if self.endpoint.trim().is_empty() => {
                Err(BackendError::Config("remote backend requires an endpoint".into()))
            }
            BackendKind::Remote if self.api_key_ref.trim().is_empty() => Err(BackendError::Config(
                "remote backend requires a credential source".into(),
            )),
            BackendKind::Stub if self.seed.is_none() => {
                Err(BackendError::Config("stub backend requires a seed".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Parsed reply payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalBatch {
    pub proposals: Vec<Proposal>,
}

/// Link reply before the direction token is checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawVerdict {
    pub affected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supporting_node_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplyPayload {
    Proposals(ProposalBatch),
    Verdict(RawVerdict),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredReply {
    pub raw: String,
    pub payload: Option<ReplyPayload>,
    pub parse_ok: bool,
    pub parse_error: Option<String>,
}

/// The JSON object in `raw`, tolerating code fences or stray prose around it.
fn json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

/// Parses a raw backend reply against the schema for `kind`.
pub fn parse_reply(kind: CallKind, raw: &str) -> StructuredReply {
    let parsed = match json_object(raw) {
        None => Err("reply contains no JSON object".to_string()),
        Some(obj) => match kind {
            CallKind::Propose => serde_json::from_str::<ProposalBatch>(obj)
                .map(ReplyPayload::Proposals)
                .map_err(|e| e.to_string()),
            CallKind::Link => serde_json::from_str::<RawVerdict>(obj)
                .map(ReplyPayload::Verdict)
                .map_err(|e| e.to_string()),
        },
    };
    match parsed {
        Ok(payload) => StructuredReply {
            raw: raw.to_string(),
            payload: Some(payload),
            parse_ok: true,
            parse_error: None,
        },
        Err(e) => StructuredReply {
            raw: raw.to_string(),
            payload: None,
            parse_ok: false,
            parse_error: Some(e),
        },
    }
}

enum Check<T> {
    Accept(T),
    /// Unusable reply; ask again with a format reminder.
    Reformat(String),
    /// Usable but flawed; reprompt once with `hint`, else take `fallback`.
    Reprompt {
        token: String,
        fallback: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retry_limit: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

/// Shared, internally synchronized front door to a backend.
pub struct Gateway {
    transport: Arc<dyn Transport>,
    prompts: Arc<PromptSet>,
    retry: RetryPolicy,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
    audit: Option<Arc<AuditLog>>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        Self {
            transport,
            prompts: Arc::new(PromptSet::bundled()),
            retry,
            limiter: Arc::new(RateLimiter::unlimited()),
            clock: Arc::new(SystemClock::new()),
            audit: None,
        }
    }

    /// Builds the transport described by `profile`. Remote transports read
    /// their credential here, so a missing variable fails fast.
    pub fn connect(profile: &BackendProfile) -> Result<Self, BackendError> {
        profile.validate()?;
        let transport: Arc<dyn Transport> = match profile.kind {
            BackendKind::Stub => Arc::new(StubTransport::new(profile.seed.unwrap_or_default())),
            BackendKind::Remote => {
                Arc::new(RemoteTransport::new(profile).map_err(|e| BackendError::Config(e.to_string()))?)
            }
        };
        Ok(Self::new(
            transport,
            RetryPolicy {
                retry_limit: profile.retry_limit,
                backoff_base: profile.backoff_base,
                backoff_cap: profile.backoff_cap,
            },
        )
        .with_limiter(Arc::new(RateLimiter::new(profile.rate_limit))))
    }

    pub fn with_prompts(mut self, prompts: Arc<PromptSet>) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_audit(mut self, audit: Option<Arc<AuditLog>>) -> Self {
        self.audit = audit;
        self
    }

    /// Attempts are capped at `retry_limit + 1` transport calls in total.
    /// Transport failures back off before the next attempt; unparseable
    /// replies are re-asked at once with a format reminder.
    fn call<T>(
        &self,
        kind: CallKind,
        payload: &Value,
        prompt: &str,
        temperature: f64,
        diagnostics: &mut Vec<String>,
        mut check: impl FnMut(ReplyPayload, &mut Vec<String>) -> Check<T>,
    ) -> Result<T, BackendError> {
        let mut current = prompt.to_string();
        let mut fallback: Option<T> = None;
        let mut last = String::from("no attempt made");
        let attempts = self.retry.retry_limit + 1;
        for attempt in 0..attempts {
            self.limiter.acquire(self.clock.as_ref());
            let request = TransportRequest {
                kind,
                payload,
                system: &self.prompts.system,
                prompt: &current,
                temperature,
                attempt,
            };
            let raw = match self.transport.send(&request) {
                Ok(raw) => raw,
                Err(e) => {
                    self.audit(kind, attempt, false);
                    if !e.is_retryable() {
                        return Err(BackendError::Fatal {
                            kind,
                            message: e.to_string(),
                        });
                    }
                    last = e.to_string();
                    if attempt + 1 < attempts {
                        let jitter = rand::random::<f64>();
                        self.clock.sleep(backoff_delay(
                            attempt,
                            self.retry.backoff_base,
                            self.retry.backoff_cap,
                            jitter,
                        ));
                    }
                    current = prompt.to_string();
                    continue;
                }
            };
            let reply = parse_reply(kind, &raw);
            self.audit(kind, attempt, reply.parse_ok);
            let Some(parsed) = reply.payload else {
                let err = reply.parse_error.unwrap_or_default();
                diagnostics.push(format!("{kind}: unparseable reply on attempt {}: {err}", attempt + 1));
                last = format!("unparseable reply: {err}");
                current = self.prompts.render_reformat(prompt, &err);
                continue;
            };
            match check(parsed, diagnostics) {
                Check::Accept(value) => return Ok(value),
                Check::Reformat(err) => {
                    diagnostics.push(format!("{kind}: invalid reply on attempt {}: {err}", attempt + 1));
                    last = err.clone();
                    current = self.prompts.render_reformat(prompt, &err);
                }
                Check::Reprompt { token, fallback: fb } => {
                    if fallback.is_some() {
                        diagnostics.push(format!("{kind}: direction {token:?} repeated; using ambiguous"));
                        return Ok(fb);
                    }
                    diagnostics.push(format!("{kind}: direction {token:?} rejected; reprompting"));
                    fallback = Some(fb);
                    current = self.prompts.render_direction(prompt, &token);
                }
            }
        }
        if let Some(fb) = fallback {
            diagnostics.push(format!("{kind}: no valid direction after reprompt; using ambiguous"));
            return Ok(fb);
        }
        Err(BackendError::Exhausted { kind, attempts, last })
    }

    fn audit(&self, kind: CallKind, attempt: u32, parse_ok: bool) {
        if let Some(log) = &self.audit {
            log.record(kind, attempt, parse_ok);
        }
    }
}

impl ConsequenceProposer for Gateway {
    fn propose(
        &self,
        request: &ProposalRequest,
        temperature: f64,
        diagnostics: &mut Vec<String>,
    ) -> Result<Vec<Proposal>, BackendError> {
        if request.frontier.is_empty() {
            return Ok(Vec::new());
        }
        let payload = serde_json::to_value(request).expect("request serializes");
        let prompt = self.prompts.render_propose(request);
        let frontier: HashSet<&str> = request.frontier.iter().map(|n| n.node_id.as_str()).collect();
        self.call(
            CallKind::Propose,
            &payload,
            &prompt,
            temperature,
            diagnostics,
            |reply, diag| {
                let ReplyPayload::Proposals(batch) = reply else {
                    return Check::Reformat("expected a proposal batch".into());
                };
                let mut kept = Vec::with_capacity(batch.proposals.len());
                for p in batch.proposals {
                    if frontier.contains(p.parent_id.as_str()) {
                        kept.push(p);
                    } else {
                        diag.push(format!("propose: dropped proposal for unknown parent {}", p.parent_id));
                    }
                }
                Check::Accept(kept)
            },
        )
    }
}

impl IndicatorLinker for Gateway {
    fn link(
        &self,
        query: &LinkQuery,
        link_temperature: f64,
        diagnostics: &mut Vec<String>,
    ) -> Result<LinkVerdict, BackendError> {
        let payload = serde_json::to_value(query).expect("query serializes");
        let prompt = self.prompts.render_link(query);
        let indicator = query.indicator.id.clone();
        self.call(
            CallKind::Link,
            &payload,
            &prompt,
            link_temperature,
            diagnostics,
            |reply, diag| {
                let ReplyPayload::Verdict(raw) = reply else {
                    return Check::Reformat("expected a link verdict".into());
                };
                if !raw.affected {
                    if !raw.supporting_node_ids.is_empty() {
                        diag.push(format!(
                            "link {indicator}: discarded supporting ids on an unaffected verdict"
                        ));
                    }
                    return Check::Accept(LinkVerdict::unaffected());
                }
                let token = raw.direction.clone().unwrap_or_default();
                match Direction::parse(&token) {
                    Some(direction) => Check::Accept(LinkVerdict {
                        affected: true,
                        direction: Some(direction),
                        supporting_node_ids: raw.supporting_node_ids,
                    }),
                    None => Check::Reprompt {
                        token,
                        fallback: LinkVerdict {
                            affected: true,
                            direction: Some(Direction::Ambiguous),
                            supporting_node_ids: raw.supporting_node_ids,
                        },
                    },
                }
            },
        )
    }
}
