//! Frozen outputs of the deterministic stub backend.

mod common;

use std::sync::Arc;

use common::assert_golden;
use policygraph_core::backend::{
    stub_generate, BackendProfile, CallKind, ConsequenceProposer, Gateway, IndicatorLinker, LinkQuery, ReplyPayload,
};
use policygraph_core::dag::{build_dag, NodeSummary, ProposalRequest, TokenJaccard};
use policygraph_core::{map_indicators, ConsequenceDag, Evaluator, IndicatorVocabulary, PolicyEpisode, RunConfig};

const POLICY: &str = "Introduce a carbon tax of 50 euros per tonne on industrial emissions";

fn config() -> RunConfig {
    RunConfig {
        max_depth: 2,
        max_branch: 2,
        random_seed: Some(42),
        ..RunConfig::default()
    }
}

fn gateway() -> Gateway {
    Gateway::connect(&BackendProfile::from_config(&config())).unwrap()
}

fn episode() -> PolicyEpisode {
    PolicyEpisode::new("carbon-tax", POLICY)
        .with_focus(["co2_emissions", "fiscal_balance", "inflation"])
        .with_relevance([
            "co2_emissions",
            "inflation",
            "gdp_growth",
            "poverty_rate",
            "household_debt",
        ])
}

fn golden_dag() -> ConsequenceDag {
    build_dag(&episode(), &config(), &gateway(), &TokenJaccard, &mut vec![]).unwrap()
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s
}

#[test]
fn stub_dag_is_frozen() {
    let dag = golden_dag();
    assert_eq!(dag, golden_dag(), "two builds differ");
    assert!(dag.violations(2, 2).is_empty());
    assert_golden("stub_dag.json", &pretty(&dag));
}

#[test]
fn stub_root_proposals_are_frozen() {
    let req = ProposalRequest {
        policy: POLICY.into(),
        context: Default::default(),
        frontier: vec![NodeSummary {
            node_id: "L0N0".into(),
            text: POLICY.into(),
            layer: 0,
        }],
        max_branch: 2,
        remaining_depth: 2,
    };
    let proposals = gateway().propose(&req, 0.7, &mut vec![]).unwrap();
    assert_eq!(proposals.len(), 2);
    assert_golden("stub_root_proposals.json", &pretty(&proposals));
}

#[test]
fn stub_impacts_are_frozen() {
    let dag = golden_dag();
    let vocab = IndicatorVocabulary::default_vocabulary();
    let impacts = map_indicators(&dag, &vocab, &episode(), &config(), &gateway(), &mut vec![]).unwrap();
    assert_eq!(impacts.len(), 19);
    assert!(impacts.iter().all(|i| i.is_consistent(&dag, 5)));
    assert_golden("stub_impacts.json", &pretty(&impacts));
}

#[test]
fn stub_verdict_for_gdp_growth_is_frozen() {
    let dag = golden_dag();
    let vocab = IndicatorVocabulary::default_vocabulary();
    let query = LinkQuery {
        policy: POLICY.into(),
        context: Default::default(),
        nodes: dag.nodes.iter().map(NodeSummary::from).collect(),
        indicator: vocab.get("gdp_growth").unwrap().clone(),
        max_links: 5,
    };
    let payload = serde_json::to_value(&query).unwrap();
    let reply = stub_generate(42, CallKind::Link, &payload);
    let Some(ReplyPayload::Verdict(raw)) = &reply.payload else {
        panic!()
    };
    let verdict = gateway().link(&query, 0.2, &mut vec![]).unwrap();
    assert_eq!(verdict.affected, raw.affected);
    assert_golden("stub_verdict_gdp_growth.json", &format!("{}\n", reply.raw));
}

#[test]
fn stub_record_is_frozen() {
    let vocab = Arc::new(IndicatorVocabulary::default_vocabulary());
    let ev = Evaluator::connect(vocab, config()).unwrap();
    let record = ev.evaluate(&episode());
    record.check().unwrap();
    assert_golden("stub_record.json", &record.to_json());
}
