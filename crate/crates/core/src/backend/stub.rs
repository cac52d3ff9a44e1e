//! Offline backends: a deterministic stub and an adversarial proposer.
//!
//! The stub is a pure function of `(seed, payload)`. Every frontier parent
//! gets exactly `max_branch` proposals, template sentences drawn from a word
//! table by a seeded hash of the parent text.
//! Each node independently "touches" an indicator with a fixed probability,
//! again by seeded hash, and the touched nodes become the supporting set.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    BackendError, CallKind, ConsequenceProposer, ProposalBatch, RawVerdict, ReplyPayload, StructuredReply, Transport,
    TransportError, TransportRequest,
};
use crate::dag::{Proposal, ProposalRequest};

/// Subjects with a plural flag for verb agreement.
const SUBJECTS: [(&str, bool); 20] = [
    ("household disposable income", false),
    ("consumer spending", false),
    ("business investment", false),
    ("public debt", false),
    ("tax revenue", false),
    ("employment in affected sectors", false),
    ("youth employment", false),
    ("consumer prices", true),
    ("housing costs", true),
    ("import demand", false),
    ("export competitiveness", false),
    ("social transfer uptake", false),
    ("demand for health services", false),
    ("school enrolment", false),
    ("energy consumption", false),
    ("carbon emissions", true),
    ("income inequality", false),
    ("poverty risk for low-income households", false),
    ("foreign investment inflows", true),
    ("labour force participation", false),
];

/// (singular, plural) verb phrases.
const VERBS: [(&str, &str); 5] = [
    ("rises", "rise"),
    ("falls", "fall"),
    ("becomes more volatile", "become more volatile"),
    ("shifts toward lower-income groups", "shift toward lower-income groups"),
    ("stabilises", "stabilise"),
];

/// Per-node chance, in percent, of touching a given indicator.
const LINK_HIT_PERCENT: u64 = 5;

/// Stable 64-bit hash of the seed and a sequence of string parts.
fn seeded_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn stub_proposals(seed: u64, payload: &Value) -> ProposalBatch {
    let max_branch = payload["max_branch"].as_u64().unwrap_or(0);
    let mut proposals = Vec::new();
    for node in payload["frontier"].as_array().into_iter().flatten() {
        let (Some(id), Some(text)) = (node["node_id"].as_str(), node["text"].as_str()) else {
            continue;
        };
        for i in 0..max_branch {
            let h = seeded_hash(seed, &["child", text, &i.to_string()]);
            let (subject, plural) = SUBJECTS[(h % SUBJECTS.len() as u64) as usize];
            let (singular, plural_verb) = VERBS[((h >> 32) % VERBS.len() as u64) as usize];
            let verb = if plural { plural_verb } else { singular };
            proposals.push(Proposal::new(id, format!("{subject} {verb}")));
        }
    }
    ProposalBatch { proposals }
}

fn stub_verdict(seed: u64, payload: &Value) -> RawVerdict {
    let indicator = payload["indicator"]["id"].as_str().unwrap_or("");
    let mut hit_ids = Vec::new();
    let mut hit_texts = Vec::new();
    for node in payload["nodes"].as_array().into_iter().flatten() {
        let (Some(id), Some(text)) = (node["node_id"].as_str(), node["text"].as_str()) else {
            continue;
        };
        if seeded_hash(seed, &["link", indicator, text]) % 100 < LINK_HIT_PERCENT {
            hit_ids.push(id.to_string());
            hit_texts.push(text);
        }
    }
    if hit_ids.is_empty() {
        return RawVerdict {
            affected: false,
            direction: None,
            supporting_node_ids: Vec::new(),
        };
    }
    let mut parts = vec!["direction", indicator];
    parts.extend(hit_texts);
    // 40% increase, 40% decrease, 20% ambiguous
    let direction = match seeded_hash(seed, &parts) % 10 {
        0..=3 => "increase",
        4..=7 => "decrease",
        _ => "ambiguous",
    };
    RawVerdict {
        affected: true,
        direction: Some(direction.to_string()),
        supporting_node_ids: hit_ids,
    }
}

/// Deterministic reply for a request payload.
pub fn stub_generate(seed: u64, kind: CallKind, payload: &Value) -> StructuredReply {
    let (raw, parsed) = match kind {
        CallKind::Propose => {
            let batch = stub_proposals(seed, payload);
            (serde_json::to_string(&batch), ReplyPayload::Proposals(batch))
        }
        CallKind::Link => {
            let verdict = stub_verdict(seed, payload);
            (serde_json::to_string(&verdict), ReplyPayload::Verdict(verdict))
        }
    };
    StructuredReply {
        raw: raw.expect("stub reply serializes"),
        payload: Some(parsed),
        parse_ok: true,
        parse_error: None,
    }
}

/// Transport that answers from [`stub_generate`] and never fails.
#[derive(Debug, Clone, Copy)]
pub struct StubTransport {
    seed: u64,
}

impl StubTransport {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Transport for StubTransport {
    fn send(&self, req: &TransportRequest<'_>) -> Result<String, TransportError> {
        Ok(stub_generate(self.seed, req.kind, req.payload).raw)
    }
}

/// Proposer that misbehaves on purpose: duplicate texts, oversized batches,
/// parent ids outside the frontier, blank statements. Deterministic per seed
/// and frontier.
#[derive(Debug, Clone)]
pub struct AdversarialProposer {
    pub seed: u64,
    /// Chance a proposal reuses a text from a small shared pool.
    pub duplicate_rate: f64,
    /// Up to this many proposals beyond `max_branch` per parent.
    pub oversize: u32,
    /// Chance a proposal names a parent outside the frontier.
    pub unknown_parent_rate: f64,
    pub blank_rate: f64,
}

impl AdversarialProposer {
    /// Random knob settings drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        Self {
            seed,
            duplicate_rate: rng.random_range(0.0..0.9),
            oversize: rng.random_range(0..6),
            unknown_parent_rate: rng.random_range(0.0..0.5),
            blank_rate: rng.random_range(0.0..0.2),
        }
    }
}

const POOL: [&str; 6] = [
    "prices rise",
    "Prices rise!",
    "employment falls",
    "public debt rises",
    "debt public rises",
    "household income rises",
];

impl ConsequenceProposer for AdversarialProposer {
    fn propose(
        &self,
        request: &ProposalRequest,
        _temperature: f64,
        _diagnostics: &mut Vec<String>,
    ) -> Result<Vec<Proposal>, BackendError> {
        let key: Vec<&str> = request.frontier.iter().map(|n| n.node_id.as_str()).collect();
        let mut rng = StdRng::seed_from_u64(seeded_hash(self.seed, &key));
        let layer = request.frontier.first().map(|n| n.layer).unwrap_or(0);
        let mut out = Vec::new();
        for node in &request.frontier {
            let n = rng.random_range(0..=request.max_branch + self.oversize);
            for _ in 0..n {
                let parent = if rng.random_bool(self.unknown_parent_rate) {
                    match rng.random_range(0..3) {
                        0 => "L0N0".to_string(),
                        1 => format!("L{}N{}", layer + 1, rng.random_range(0..4)),
                        _ => format!("ghost-{}", rng.random_range(0..100)),
                    }
                } else {
                    node.node_id.clone()
                };
                let text = if rng.random_bool(self.blank_rate) {
                    "   ".to_string()
                } else if rng.random_bool(self.duplicate_rate) {
                    POOL[rng.random_range(0..POOL.len())].to_string()
                } else {
                    format!(
                        "effect {} of {} variant {}",
                        rng.random_range(0..1000),
                        node.node_id,
                        rng.random_range(0..3)
                    )
                };
                out.push(Proposal::new(parent, text));
            }
        }
        Ok(out)
    }
}
