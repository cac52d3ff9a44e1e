//! Aligns a consequence graph to the indicator vocabulary, one query per
//! indicator.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::backend::{IndicatorLinker, LinkQuery, LinkVerdict};
use crate::config::RunConfig;
use crate::dag::NodeSummary;
use crate::model::{ConsequenceDag, IndicatorImpact, PolicyEpisode};
use crate::vocab::IndicatorVocabulary;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("indicator linking failed for all {count} indicators; first error: {first}")]
    AllFailed { count: usize, first: String },
}

/// Checks a verdict against the graph: unknown or repeated ids are dropped,
/// support beyond `max_links` is cut, and an affected verdict left with no
/// support is demoted. Repairs are noted on the entry.
pub fn repair_verdict(
    indicator_id: &str,
    verdict: LinkVerdict,
    dag: &ConsequenceDag,
    max_links: usize,
) -> IndicatorImpact {
    if !verdict.affected {
        return IndicatorImpact::unaffected(indicator_id);
    }
    let mut notes = Vec::new();
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for id in verdict.supporting_node_ids {
        if !dag.contains(&id) {
            notes.push(format!("dropped unknown node {id}"));
        } else if seen.insert(id.clone()) {
            kept.push(id);
        }
    }
    if kept.len() > max_links {
        notes.push(format!("kept first {max_links} of {} supporting nodes", kept.len()));
        kept.truncate(max_links);
    }
    let mut impact = if kept.is_empty() {
        notes.push("no supporting node left; marked unaffected".to_string());
        IndicatorImpact::unaffected(indicator_id)
    } else {
        IndicatorImpact::affected(
            indicator_id,
            verdict.direction.unwrap_or(crate::model::Direction::Ambiguous),
            kept,
        )
    };
    if !notes.is_empty() {
        impact.diagnostic = Some(notes.join("; "));
    }
    impact
}

/// Produces exactly one impact per vocabulary indicator, in vocabulary order.
///
/// A backend failure on one indicator records it as unaffected with a
/// diagnostic; only when every indicator fails is the whole mapping an error.
pub fn map_indicators(
    dag: &ConsequenceDag,
    vocab: &IndicatorVocabulary,
    episode: &PolicyEpisode,
    config: &RunConfig,
    linker: &dyn IndicatorLinker,
    diagnostics: &mut Vec<String>,
) -> Result<Vec<IndicatorImpact>, MapError> {
    let nodes: Vec<NodeSummary> = dag.nodes.iter().map(NodeSummary::from).collect();
    let max_links = config.max_links_per_node as usize;
    let mut impacts = Vec::with_capacity(vocab.len());
    let mut failures = Vec::new();
    for indicator in vocab.indicators() {
        let query = LinkQuery {
            policy: episode.description.clone(),
            context: episode.context.clone(),
            nodes: nodes.clone(),
            indicator: indicator.clone(),
            max_links: config.max_links_per_node,
        };
        match linker.link(&query, config.link_temperature, diagnostics) {
            Ok(verdict) => {
                let impact = repair_verdict(&indicator.id, verdict, dag, max_links);
                if let Some(note) = &impact.diagnostic {
                    diagnostics.push(format!("link {}: {note}", indicator.id));
                }
                impacts.push(impact);
            }
            Err(e) => {
                diagnostics.push(format!("link {}: {e}", indicator.id));
                let mut impact = IndicatorImpact::unaffected(&indicator.id);
                impact.diagnostic = Some(format!("backend failure: {e}"));
                failures.push(e.to_string());
                impacts.push(impact);
            }
        }
    }
    if !vocab.is_empty() && failures.len() == vocab.len() {
        return Err(MapError::AllFailed {
            count: failures.len(),
            first: failures.swap_remove(0),
        });
    }
    Ok(impacts)
}

/// The system-flagged set: ids of every affected entry.
pub fn derive_flagged_set(impacts: &[IndicatorImpact]) -> BTreeSet<String> {
    impacts
        .iter()
        .filter(|i| i.affected)
        .map(|i| i.indicator_id.clone())
        .collect()
}
