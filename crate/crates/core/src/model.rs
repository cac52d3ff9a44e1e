//! Shared domain types for policy episodes and consequence graphs.
//!
//! Everything here is a plain value type: constructed once, then shared
//! read-only between workers.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vocab::IndicatorVocabulary;

/// One input row: a policy, its context, and the two reference indicator sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEpisode {
    pub episode_id: String,
    pub description: String,
    #[serde(default)]
    pub context: BTreeMap<String, String>,
    /// Indicators highlighted in official communication (G).
    #[serde(default)]
    pub government_focus: BTreeSet<String>,
    /// Indicators judged materially affected by annotators (R).
    #[serde(default)]
    pub relevance_set: BTreeSet<String>,
}

impl PolicyEpisode {
    pub fn new(episode_id: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            episode_id: episode_id.into(),
            description: description.into(),
            context: BTreeMap::new(),
            government_focus: BTreeSet::new(),
            relevance_set: BTreeSet::new(),
        }
    }

    pub fn with_context(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.context.insert(key.into(), value.into());
        self
    }

    pub fn with_focus<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.government_focus = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_relevance<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.relevance_set = ids.into_iter().map(Into::into).collect();
        self
    }
}

/// A named reason an episode cannot be processed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingEpisodeId,
    InvalidEpisodeId(String),
    DuplicateEpisodeId(String),
    MissingDescription,
    UnknownIndicator { field: &'static str, id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingEpisodeId => f.write_str("missing episode id"),
            Violation::InvalidEpisodeId(id) => write!(f, "invalid episode id {id:?}"),
            Violation::DuplicateEpisodeId(id) => write!(f, "duplicate episode id {id:?}"),
            Violation::MissingDescription => f.write_str("missing description"),
            Violation::UnknownIndicator { field, id } => {
                write!(f, "unknown indicator id {id:?} in {field}")
            }
        }
    }
}

/// Episode ids double as output file names, so path syntax is rejected.
/// Ids double as file names, so they must not escape the output directory
/// or collide with `summary.json` and the `row-N.json` fallback names.
fn episode_id_is_safe(id: &str) -> bool {
    let row_name = id
        .strip_prefix("row-")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
    id != "."
        && id != ".."
        && id != "summary"
        && !row_name
        && id.len() <= 200
        && !id.chars().any(|c| c == '/' || c == '\\' || c.is_control())
}

/// Checks an episode against its invariants and the active vocabulary.
///
/// Violations are data: an empty list means the episode is valid.
/// Batch-level uniqueness of ids is checked by the caller.
pub fn validate_episode(episode: &PolicyEpisode, vocab: &IndicatorVocabulary) -> Vec<Violation> {
    let mut violations = Vec::new();
    let id = episode.episode_id.trim();
    if id.is_empty() {
        violations.push(Violation::MissingEpisodeId);
    } else if !episode_id_is_safe(id) {
        violations.push(Violation::InvalidEpisodeId(episode.episode_id.clone()));
    }
    if episode.description.trim().is_empty() {
        violations.push(Violation::MissingDescription);
    }
    for (field, set) in [
        ("government_focus", &episode.government_focus),
        ("relevance_set", &episode.relevance_set),
    ] {
        for indicator in set {
            if !vocab.contains(indicator) {
                violations.push(Violation::UnknownIndicator {
                    field,
                    id: indicator.clone(),
                });
            }
        }
    }
    violations
}

/// Qualitative direction of an indicator impact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
    Ambiguous,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Increase, Direction::Decrease, Direction::Ambiguous];

    /// Strict three-way parse; anything else is rejected.
    pub fn parse(token: &str) -> Option<Direction> {
        match token.trim().to_ascii_lowercase().as_str() {
            "increase" => Some(Direction::Increase),
            "decrease" => Some(Direction::Decrease),
            "ambiguous" => Some(Direction::Ambiguous),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
            Direction::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Deterministic node id: `L{layer}N{counter}`, counter restarting per layer.
pub fn node_id(layer: u32, counter: usize) -> String {
    format!("L{layer}N{counter}")
}

pub const ROOT_ID: &str = "L0N0";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsequenceNode {
    pub node_id: String,
    pub text: String,
    pub layer: u32,
    #[serde(default)]
    pub parents: BTreeSet<String>,
}

/// Layered multi-parent consequence graph rooted at the policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsequenceDag {
    /// Sorted by layer, then node id.
    pub nodes: Vec<ConsequenceNode>,
    pub root_id: String,
    /// Deepest layer present.
    pub max_depth_used: u32,
    /// Largest child count of any node.
    pub max_branch_used: u32,
}

/// A structural defect found by [`ConsequenceDag::violations`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagViolation {
    RootCount(usize),
    MissingRoot(String),
    DuplicateNode(String),
    DanglingParent { node: String, parent: String },
    OrphanNode(String),
    LayerOrder { node: String, parent: String },
    LayerFormula(String),
    TooDeep { node: String, layer: u32 },
    TooManyChildren { node: String, children: usize },
    Cycle,
}

impl fmt::Display for DagViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DagViolation::RootCount(n) => write!(f, "expected exactly one root, found {n}"),
            DagViolation::MissingRoot(id) => write!(f, "root id {id} does not name a root node"),
            DagViolation::DuplicateNode(id) => write!(f, "duplicate node id {id}"),
            DagViolation::DanglingParent { node, parent } => {
                write!(f, "node {node} references missing parent {parent}")
            }
            DagViolation::OrphanNode(id) => write!(f, "non-root node {id} has no parent"),
            DagViolation::LayerOrder { node, parent } => {
                write!(f, "edge {parent} -> {node} does not increase the layer")
            }
            DagViolation::LayerFormula(id) => {
                write!(f, "node {id} is not one layer below its deepest parent")
            }
            DagViolation::TooDeep { node, layer } => write!(f, "node {node} at layer {layer} exceeds max depth"),
            DagViolation::TooManyChildren { node, children } => {
                write!(f, "node {node} has {children} children")
            }
            DagViolation::Cycle => f.write_str("graph contains a cycle"),
        }
    }
}

impl ConsequenceDag {
    /// A graph holding only the policy root.
    pub fn root_only(policy_text: &str) -> Self {
        Self::from_nodes(vec![ConsequenceNode {
            node_id: ROOT_ID.to_string(),
            text: policy_text.to_string(),
            layer: 0,
            parents: BTreeSet::new(),
        }])
    }

    /// Assembles a graph from nodes, normalizing order and recomputing the
    /// `*_used` summaries. The root is the first layer-0 node.
    pub fn from_nodes(mut nodes: Vec<ConsequenceNode>) -> Self {
        // numeric counter first so that L1N10 sorts after L1N2
        let counter = |id: &str| id.rsplit_once('N').and_then(|(_, n)| n.parse::<usize>().ok());
        nodes.sort_by(|a, b| {
            (a.layer, counter(&a.node_id), &a.node_id).cmp(&(b.layer, counter(&b.node_id), &b.node_id))
        });
        let root_id = nodes
            .iter()
            .find(|n| n.layer == 0)
            .map(|n| n.node_id.clone())
            .unwrap_or_default();
        let mut dag = Self {
            nodes,
            root_id,
            max_depth_used: 0,
            max_branch_used: 0,
        };
        dag.max_depth_used = dag.nodes.iter().map(|n| n.layer).max().unwrap_or(0);
        dag.max_branch_used = dag.child_counts().values().copied().max().unwrap_or(0) as u32;
        dag
    }

    pub fn node(&self, id: &str) -> Option<&ConsequenceNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).sum()
    }

    /// `(parent, child)` pairs in node order.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.nodes
            .iter()
            .flat_map(|n| n.parents.iter().map(move |p| (p.as_str(), n.node_id.as_str())))
            .collect()
    }

    pub fn child_counts(&self) -> HashMap<&str, usize> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for node in &self.nodes {
            for parent in &node.parents {
                *counts.entry(parent.as_str()).or_default() += 1;
            }
        }
        counts
    }

    pub fn nodes_in_layer(&self, layer: u32) -> impl Iterator<Item = &ConsequenceNode> {
        self.nodes.iter().filter(move |n| n.layer == layer)
    }

    /// Kahn's algorithm over the parent links, ignoring layer indices.
    pub fn is_acyclic(&self) -> bool {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_id.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for parent in &node.parents {
                if let Some(&p) = index.get(parent.as_str()) {
                    children[p].push(i);
                    indegree[i] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(i) = queue.pop_front() {
            visited += 1;
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        visited == self.nodes.len()
    }

    /// Every structural invariant, checked against the configured limits.
    pub fn violations(&self, max_depth: u32, max_branch: u32) -> Vec<DagViolation> {
        let mut out = Vec::new();
        let mut by_id: HashMap<&str, &ConsequenceNode> = HashMap::new();
        for node in &self.nodes {
            if by_id.insert(node.node_id.as_str(), node).is_some() {
                out.push(DagViolation::DuplicateNode(node.node_id.clone()));
            }
        }
        let roots: Vec<&ConsequenceNode> = self.nodes.iter().filter(|n| n.parents.is_empty()).collect();
        let layer_zero = self.nodes.iter().filter(|n| n.layer == 0).count();
        if roots.len() != 1 || layer_zero != 1 {
            out.push(DagViolation::RootCount(roots.len().max(layer_zero)));
        }
        match by_id.get(self.root_id.as_str()) {
            Some(root) if root.layer == 0 && root.parents.is_empty() => {}
            _ => out.push(DagViolation::MissingRoot(self.root_id.clone())),
        }
        for node in &self.nodes {
            if node.layer > max_depth {
                out.push(DagViolation::TooDeep {
                    node: node.node_id.clone(),
                    layer: node.layer,
                });
            }
            if node.layer > 0 && node.parents.is_empty() {
                out.push(DagViolation::OrphanNode(node.node_id.clone()));
            }
            let mut deepest_parent = None;
            for parent in &node.parents {
                match by_id.get(parent.as_str()) {
                    None => out.push(DagViolation::DanglingParent {
                        node: node.node_id.clone(),
                        parent: parent.clone(),
                    }),
                    Some(p) => {
                        if p.layer >= node.layer {
                            out.push(DagViolation::LayerOrder {
                                node: node.node_id.clone(),
                                parent: parent.clone(),
                            });
                        }
                        deepest_parent = deepest_parent.max(Some(p.layer));
                    }
                }
            }
            if let Some(d) = deepest_parent {
                if node.layer != d + 1 {
                    out.push(DagViolation::LayerFormula(node.node_id.clone()));
                }
            }
        }
        for (node, children) in self.child_counts() {
            if children > max_branch as usize {
                out.push(DagViolation::TooManyChildren {
                    node: node.to_string(),
                    children,
                });
            }
        }
        if !self.is_acyclic() {
            out.push(DagViolation::Cycle);
        }
        out
    }
}

/// One indicator's assessment for an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorImpact {
    pub indicator_id: String,
    pub affected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_nodes: Option<BTreeSet<String>>,
    /// Set when the entry was repaired or the backend failed for it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl IndicatorImpact {
    pub fn unaffected(indicator_id: impl Into<String>) -> Self {
        Self {
            indicator_id: indicator_id.into(),
            affected: false,
            direction: None,
            supporting_nodes: None,
            diagnostic: None,
        }
    }

    pub fn affected<I, S>(indicator_id: impl Into<String>, direction: Direction, nodes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            indicator_id: indicator_id.into(),
            affected: true,
            direction: Some(direction),
            supporting_nodes: Some(nodes.into_iter().map(Into::into).collect()),
            diagnostic: None,
        }
    }

    /// Checks the affected/payload coupling and node references.
    pub fn is_consistent(&self, dag: &ConsequenceDag, max_links: usize) -> bool {
        match (self.affected, &self.direction, &self.supporting_nodes) {
            (false, None, None) => true,
            (true, Some(_), Some(nodes)) => {
                !nodes.is_empty() && nodes.len() <= max_links && nodes.iter().all(|n| dag.contains(n))
            }
            _ => false,
        }
    }
}
