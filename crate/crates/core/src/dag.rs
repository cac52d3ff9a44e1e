//! Breadth-wise, layer-by-layer construction of the consequence graph.
//!
//! Each round asks the proposer for children of the current frontier, drops
//! proposals that reference unknown parents or are empty, truncates each
//! parent's list to `max_branch`, and merges near-duplicate candidates into
//! multi-parent nodes. Candidates resembling a node from an earlier layer are
//! dropped: linking to it would need an edge that does not go strictly deeper.
//! Expansion stops at `max_depth` or at the first layer that ends up empty.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ConsequenceProposer};
use crate::config::RunConfig;
use crate::model::{node_id, ConsequenceDag, ConsequenceNode, PolicyEpisode, ROOT_ID};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: String,
    pub text: String,
    pub layer: u32,
}

impl From<&ConsequenceNode> for NodeSummary {
    fn from(n: &ConsequenceNode) -> Self {
        Self {
            node_id: n.node_id.clone(),
            text: n.text.clone(),
            layer: n.layer,
        }
    }
}

/// What the proposer sees for one expansion round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRequest {
    pub policy: String,
    pub context: BTreeMap<String, String>,
    pub frontier: Vec<NodeSummary>,
    pub max_branch: u32,
    pub remaining_depth: u32,
}

/// One proposed child of a frontier node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub parent_id: String,
    pub text: String,
}

impl Proposal {
    pub fn new(parent_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            parent_id: parent_id.into(),
            text: text.into(),
        }
    }
}

/// Collapses runs of whitespace and trims.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Pluggable similarity in `[0, 1]`; must be symmetric with `sim(a, a) = 1`.
pub trait TextSimilarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

impl<F> TextSimilarity for F
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self(a, b)
    }
}

/// Jaccard index over lowercased, punctuation-stripped word sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenJaccard;

fn token_set(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

impl TextSimilarity for TokenJaccard {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        text_similarity(a, b)
    }
}

/// Default similarity. Two statements with no tokens count as identical.
pub fn text_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (token_set(a), token_set(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// Keeps the first `max_branch` children, in proposal order. Returns the kept
/// list and how many were cut.
pub fn enforce_branch_limit<T>(mut children: Vec<T>, max_branch: u32) -> (Vec<T>, usize) {
    let cap = max_branch as usize;
    let cut = children.len().saturating_sub(cap);
    children.truncate(cap);
    (children, cut)
}

/// A candidate discarded because it resembles a node from an earlier layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedCandidate {
    pub proposal: Proposal,
    pub matched_node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerMerge {
    pub nodes: Vec<ConsequenceNode>,
    pub dropped: Vec<DroppedCandidate>,
}

/// Merges one layer's candidates into nodes at `layer`.
///
/// Candidates are visited in input order. One similar (at or above
/// `threshold`) to an `earlier` node is dropped; one similar to a node already
/// created in this layer adds its parent to that node; anything else becomes
/// a new node `L{layer}N{k}` with the candidate's text.
pub fn merge_layer(
    candidates: &[Proposal],
    earlier: &[ConsequenceNode],
    layer: u32,
    threshold: f64,
    similarity: &dyn TextSimilarity,
) -> LayerMerge {
    let mut out = LayerMerge::default();
    for cand in candidates {
        if let Some(prev) = earlier
            .iter()
            .find(|n| similarity.similarity(&n.text, &cand.text) >= threshold)
        {
            out.dropped.push(DroppedCandidate {
                proposal: cand.clone(),
                matched_node: prev.node_id.clone(),
            });
            continue;
        }
        match out
            .nodes
            .iter_mut()
            .find(|n| similarity.similarity(&n.text, &cand.text) >= threshold)
        {
            Some(node) => {
                node.parents.insert(cand.parent_id.clone());
            }
            None => {
                let id = node_id(layer, out.nodes.len());
                out.nodes.push(ConsequenceNode {
                    node_id: id,
                    text: cand.text.clone(),
                    layer,
                    parents: BTreeSet::from([cand.parent_id.clone()]),
                });
            }
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("consequence expansion failed at layer {layer}: {source}")]
    Backend {
        layer: u32,
        #[source]
        source: BackendError,
    },
}

/// Builds the consequence graph for one episode.
pub fn build_dag(
    episode: &PolicyEpisode,
    config: &RunConfig,
    proposer: &dyn ConsequenceProposer,
    similarity: &dyn TextSimilarity,
    diagnostics: &mut Vec<String>,
) -> Result<ConsequenceDag, BuildError> {
    let root = ConsequenceNode {
        node_id: ROOT_ID.to_string(),
        text: episode.description.clone(),
        layer: 0,
        parents: BTreeSet::new(),
    };
    let mut nodes = vec![root.clone()];
    let mut frontier = vec![root];

    for layer in 1..=config.max_depth {
        let request = ProposalRequest {
            policy: episode.description.clone(),
            context: episode.context.clone(),
            frontier: frontier.iter().map(NodeSummary::from).collect(),
            max_branch: config.max_branch,
            remaining_depth: config.max_depth - layer + 1,
        };
        let proposals = proposer
            .propose(&request, config.temperature, diagnostics)
            .map_err(|source| BuildError::Backend { layer, source })?;

        let slot: HashMap<&str, usize> = frontier
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_id.as_str(), i))
            .collect();
        let mut per_parent: Vec<Vec<Proposal>> = vec![Vec::new(); frontier.len()];
        for p in proposals {
            let Some(&i) = slot.get(p.parent_id.as_str()) else {
                diagnostics.push(format!(
                    "layer {layer}: dropped proposal for unknown parent {}",
                    p.parent_id
                ));
                continue;
            };
            let text = normalize_text(&p.text);
            if text.is_empty() {
                diagnostics.push(format!("layer {layer}: dropped empty proposal for {}", p.parent_id));
                continue;
            }
            per_parent[i].push(Proposal::new(p.parent_id, text));
        }

        let mut candidates = Vec::new();
        for (parent, list) in frontier.iter().zip(per_parent) {
            let (kept, cut) = enforce_branch_limit(list, config.max_branch);
            if cut > 0 {
                diagnostics.push(format!(
                    "layer {layer}: truncated {cut} proposal(s) for {} to max_branch {}",
                    parent.node_id, config.max_branch
                ));
            }
            candidates.extend(kept);
        }

        let merged = merge_layer(&candidates, &nodes, layer, config.merge_threshold, similarity);
        for d in &merged.dropped {
            diagnostics.push(format!(
                "layer {layer}: dropped {:?} from {} as a repeat of {}",
                d.proposal.text, d.proposal.parent_id, d.matched_node
            ));
        }
        if merged.nodes.is_empty() {
            break;
        }
        frontier = merged.nodes.clone();
        nodes.extend(merged.nodes);
    }

    Ok(ConsequenceDag::from_nodes(nodes))
}
