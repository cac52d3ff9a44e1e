use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use policygraph_core::backend::AdversarialProposer;
use policygraph_core::dag::{build_dag, TokenJaccard};
use policygraph_core::record::{EpisodeInput, Timestamps};
use policygraph_core::{
    BackendKind, Direction, EpisodeMetrics, EpisodeRecord, EpisodeStatus, IndicatorImpact, IndicatorVocabulary, Mode,
    PolicyEpisode, RunConfig,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn ids() -> Vec<String> {
    IndicatorVocabulary::default_vocabulary()
        .ids()
        .map(str::to_string)
        .collect()
}

fn id_subset() -> impl Strategy<Value = BTreeSet<String>> {
    prop::sample::subsequence(ids(), 0..6).prop_map(|v| v.into_iter().collect())
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.%€é\"\\\\-]{1,40}"
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        0.0f64..2.0,
        0.0f64..2.0,
        0u32..4,
        1u32..4,
        1u32..6,
        0.0f64..=1.0,
        prop::option::of(any::<u64>()),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(t, lt, d, b, l, m, seed, baseline, remote)| RunConfig {
            temperature: t,
            link_temperature: lt,
            max_depth: d,
            max_branch: b,
            max_links_per_node: l,
            merge_threshold: m,
            random_seed: seed,
            mode: if baseline { Mode::Baseline } else { Mode::Pipeline },
            backend: if remote { BackendKind::Remote } else { BackendKind::Stub },
            ..RunConfig::default()
        })
}

fn timestamps() -> impl Strategy<Value = Timestamps> {
    (0i64..4_000_000_000, 0u32..1_000_000_000, 0i64..100_000).prop_map(|(s, ns, d)| {
        let started_at = DateTime::<Utc>::from_timestamp(s, ns).unwrap();
        Timestamps {
            started_at,
            finished_at: started_at + chrono::Duration::milliseconds(d),
        }
    })
}

fn impacts_for(dag: &policygraph_core::ConsequenceDag, cap: u32, seed: u64) -> Vec<IndicatorImpact> {
    let mut rng = StdRng::seed_from_u64(seed);
    ids()
        .into_iter()
        .map(|id| {
            if rng.random_bool(0.6) {
                return IndicatorImpact::unaffected(&id);
            }
            let k = rng.random_range(1..=cap as usize);
            let support: Vec<String> = (0..k)
                .map(|_| dag.nodes[rng.random_range(0..dag.nodes.len())].node_id.clone())
                .collect();
            let dir = Direction::ALL[rng.random_range(0..3)];
            let mut imp = IndicatorImpact::affected(&id, dir, support);
            if rng.random_bool(0.2) {
                imp.diagnostic = Some("kept first 1 of 2 supporting nodes".into());
            }
            imp
        })
        .collect()
}

prop_compose! {
    fn record()(
        id in "[a-z0-9][a-z0-9_-]{0,15}",
        description in text(),
        context in prop::collection::btree_map("[a-z_]{1,10}", text(), 0..4),
        focus in id_subset(),
        relevance in id_subset(),
        config in config(),
        status in 0u8..3,
        message in "[a-zA-Z][a-zA-Z0-9 ,.]{0,30}",
        seed in any::<u64>(),
        diagnostics in prop::collection::vec(text(), 0..3),
        timestamps in timestamps(),
    ) -> EpisodeRecord {
        let episode = PolicyEpisode {
            episode_id: id.clone(),
            description,
            context: context.into_iter().collect::<BTreeMap<_, _>>(),
            government_focus: focus,
            relevance_set: relevance,
        };
        let mut record = EpisodeRecord {
            episode_id: id,
            input: EpisodeInput::from(&episode),
            dag: None,
            impacts: None,
            metrics: None,
            status: match status {
                0 => EpisodeStatus::ok(),
                1 => EpisodeStatus::skipped(message),
                _ => EpisodeStatus::error(message),
            },
            diagnostics,
            config: config.clone(),
            timestamps,
        };
        if status == 0 {
            let dag = build_dag(&episode, &config, &AdversarialProposer::random(seed), &TokenJaccard, &mut vec![])
                .expect("adversarial proposer never errors");
            let impacts = impacts_for(&dag, config.max_links_per_node, seed);
            let flagged = policygraph_core::derive_flagged_set(&impacts);
            let annotated = !episode.government_focus.is_empty() || !episode.relevance_set.is_empty();
            record.metrics = annotated.then(|| {
                EpisodeMetrics::compute(&flagged, &episode.government_focus, &episode.relevance_set)
            });
            record.dag = Some(dag);
            record.impacts = Some(impacts);
        }
        record
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn valid_records_survive_a_round_trip(r in record()) {
        r.check().unwrap();
        let text = r.to_json();
        let back = EpisodeRecord::from_json(&text).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(back.to_json(), text);
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let r = EpisodeRecord {
        episode_id: "e".into(),
        input: EpisodeInput::from(&PolicyEpisode::new("e", "p")),
        dag: None,
        impacts: None,
        metrics: None,
        status: EpisodeStatus::skipped("missing description"),
        diagnostics: vec![],
        config: RunConfig::default(),
        timestamps: Timestamps {
            started_at: DateTime::<Utc>::UNIX_EPOCH,
            finished_at: DateTime::<Utc>::UNIX_EPOCH,
        },
    };
    let mut v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    v["surprise"] = serde_json::json!(1);
    assert!(EpisodeRecord::from_json(&v.to_string()).is_err());
}
