//! Structural invariants of built graphs under misbehaving proposers.

use std::collections::{BTreeSet, HashMap, HashSet};

use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use policygraph_core::backend::AdversarialProposer;
use policygraph_core::dag::{build_dag, merge_layer, Proposal, TokenJaccard};
use policygraph_core::{ConsequenceDag, PolicyEpisode, RunConfig};
use proptest::prelude::*;

/// Independent re-statement of the graph rules; returns the first breach.
fn first_breach(dag: &ConsequenceDag, max_depth: u32, max_branch: u32) -> Option<String> {
    let by_id: HashMap<&str, _> = dag.nodes.iter().map(|n| (n.node_id.as_str(), n)).collect();
    if by_id.len() != dag.nodes.len() {
        return Some("duplicate node ids".into());
    }
    let roots: Vec<_> = dag.nodes.iter().filter(|n| n.parents.is_empty()).collect();
    if roots.len() != 1 || roots[0].node_id != dag.root_id || roots[0].layer != 0 {
        return Some(format!(
            "roots: {:?}",
            roots.iter().map(|n| &n.node_id).collect::<Vec<_>>()
        ));
    }
    let mut children: HashMap<&str, usize> = HashMap::new();
    for n in &dag.nodes {
        if n.layer > max_depth {
            return Some(format!("{} at layer {} > {max_depth}", n.node_id, n.layer));
        }
        for p in &n.parents {
            let Some(parent) = by_id.get(p.as_str()) else {
                return Some(format!("{} has unknown parent {p}", n.node_id));
            };
            if parent.layer >= n.layer {
                return Some(format!("edge {p} -> {} goes against layer order", n.node_id));
            }
            *children.entry(p.as_str()).or_default() += 1;
        }
    }
    if let Some((id, c)) = children.iter().find(|(_, &c)| c > max_branch as usize) {
        return Some(format!("{id} has {c} children > {max_branch}"));
    }

    // cross-check acyclicity with an external topological sort
    let mut g = DiGraph::<&str, ()>::new();
    let idx: HashMap<&str, _> = dag
        .nodes
        .iter()
        .map(|n| (n.node_id.as_str(), g.add_node(n.node_id.as_str())))
        .collect();
    for (p, c) in dag.edges() {
        g.add_edge(idx[p], idx[c], ());
    }
    if toposort(&g, None).is_err() {
        return Some("cycle".into());
    }
    None
}

fn config(max_depth: u32, max_branch: u32, threshold: f64) -> RunConfig {
    RunConfig {
        max_depth,
        max_branch,
        merge_threshold: threshold,
        ..RunConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn adversarial_proposals_never_break_the_graph(
        seed in any::<u64>(),
        max_depth in 0u32..=4,
        max_branch in 1u32..=4,
        threshold in 0.3f64..=1.0,
    ) {
        let proposer = AdversarialProposer::random(seed);
        let cfg = config(max_depth, max_branch, threshold);
        let ep = PolicyEpisode::new("e", "Introduce a carbon tax on heavy industry");
        let mut diags = Vec::new();
        let dag = build_dag(&ep, &cfg, &proposer, &TokenJaccard, &mut diags).unwrap();
        if let Some(breach) = first_breach(&dag, max_depth, max_branch) {
            prop_assert!(false, "{breach} (proposer {proposer:?})");
        }
        prop_assert!(dag.violations(max_depth, max_branch).is_empty());
        prop_assert!(dag.max_depth_used <= max_depth);
        prop_assert!(dag.max_branch_used <= max_branch);
    }

    #[test]
    fn merging_a_merged_layer_changes_nothing(
        texts in prop::collection::vec(
            prop::sample::select(vec!["prices rise", "Prices rise", "debt rises", "public debt rises", "jobs fall", "wages rise", "rise prices"]),
            0..12,
        ),
        parents in prop::collection::vec(0usize..3, 12),
        threshold in 0.3f64..=1.0,
    ) {
        let cands: Vec<Proposal> = texts
            .iter()
            .zip(&parents)
            .map(|(t, p)| Proposal::new(format!("L0N{p}"), t.to_lowercase()))
            .collect();
        let once = merge_layer(&cands, &[], 1, threshold, &TokenJaccard);
        let again_input: Vec<Proposal> = once
            .nodes
            .iter()
            .flat_map(|n| n.parents.iter().map(move |p| Proposal::new(p.clone(), n.text.clone())))
            .collect();
        let twice = merge_layer(&again_input, &[], 1, threshold, &TokenJaccard);
        prop_assert_eq!(once.nodes, twice.nodes);
    }
}

#[test]
fn exact_duplicates_from_two_parents_become_one_node() {
    let cands = [
        Proposal::new("L1N0", "household income rises"),
        Proposal::new("L1N1", "household income rises"),
    ];
    let out = merge_layer(&cands, &[], 2, 0.8, &TokenJaccard);
    assert_eq!(out.nodes.len(), 1);
    assert_eq!(
        out.nodes[0].parents,
        BTreeSet::from(["L1N0".to_string(), "L1N1".to_string()])
    );
}

#[test]
fn disjoint_statements_stay_apart() {
    let cands = [
        Proposal::new("L0N0", "unemployment falls"),
        Proposal::new("L0N0", "exports grow"),
    ];
    let out = merge_layer(&cands, &[], 1, 0.8, &TokenJaccard);
    let ids: HashSet<_> = out.nodes.iter().map(|n| n.node_id.as_str()).collect();
    assert_eq!(ids, HashSet::from(["L1N0", "L1N1"]));
}

#[test]
fn depth_zero_gives_the_root_alone() {
    let proposer = AdversarialProposer::random(1);
    let ep = PolicyEpisode::new("e", "Cut fuel duty");
    let dag = build_dag(&ep, &config(0, 3, 0.8), &proposer, &TokenJaccard, &mut vec![]).unwrap();
    assert_eq!(dag, ConsequenceDag::root_only("Cut fuel duty"));
}
