mod common;

use std::collections::BTreeSet;

use athres::distributed::{merge_naive, merge_samples, waste_report, MergeStrategy, SampleEnvelope};
use athres::rng::seeded;
use athres::sampler::{Counters, HeapSampler};
use athres::{ItemId, PriorityFamily, Sample, SampleItem, Sampler, ThresholdState, WeightedItem};
use proptest::prelude::*;
use serde_json::Value;

use common::{golden_envelope, golden_path};

#[test]
fn golden_envelope_is_byte_exact() {
    let written = golden_envelope().unwrap().to_jsonl();
    if std::env::var("ATHRES_BLESS").is_ok_and(|v| v == "1") {
        std::fs::write(golden_path(), &written).unwrap();
    }
    let golden = std::fs::read_to_string(golden_path()).unwrap();
    assert_eq!(written, golden);
    assert_eq!(SampleEnvelope::from_jsonl(&golden).unwrap().to_jsonl(), golden);
}

#[test]
fn golden_header_layout() {
    let golden = std::fs::read_to_string(golden_path()).unwrap();
    let mut lines = golden.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    let raw = golden.lines().next().unwrap();
    let pos = |k: &str| raw.find(&format!("\"{k}\":")).unwrap();
    let order = ["format_version", "family", "threshold", "seed", "sources", "counters", "mergeable", "threshold_item", "items"];
    assert!(order.windows(2).all(|w| pos(w[0]) < pos(w[1])), "{raw}");
    assert_eq!(header["format_version"], 1);
    assert_eq!(header["mergeable"], true);
    let n = header["items"].as_u64().unwrap() as usize;
    let items: Vec<Value> = lines.map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(items.len(), n);
    let tau = header["threshold"]["tau"]["scalar"].as_f64().unwrap();
    for it in &items {
        let r = it["R"].as_f64().unwrap();
        let w = it["w"].as_f64().unwrap();
        assert!(r < tau);
        assert_eq!(it["F"].as_f64().unwrap(), (w * tau).min(1.0));
    }
}

fn arb_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e300..1e300f64,
        -1.0..1.0f64,
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
        Just(f64::MAX),
        Just(0.1 + 0.2),
    ]
}

fn arb_item() -> impl Strategy<Value = WeightedItem> {
    (
        prop_oneof![any::<u64>().prop_map(ItemId::Int), "[a-z\"\\\\ é]{0,8}".prop_map(ItemId::Str)],
        1e-6..1e6f64,
        proptest::collection::vec(arb_float(), 0..4),
        proptest::option::of("[a-z]{1,3}"),
        proptest::option::of(0.0..1e9f64),
    )
        .prop_map(|(id, w, value, stratum, t)| {
            let mut it = WeightedItem::new(id, w, value).unwrap();
            it.stratum = stratum;
            it.arrival_time = t;
            it
        })
}

fn arb_envelope() -> impl Strategy<Value = SampleEnvelope> {
    (
        proptest::collection::vec((arb_item(), proptest::option::of(0.0..1.0f64)), 0..12),
        prop_oneof![Just(f64::INFINITY), 1e-9..10.0f64],
        prop_oneof![Just(PriorityFamily::UniformScaled), Just(PriorityFamily::ExponentialRate), Just(PriorityFamily::lomax(2.5).unwrap())],
        any::<u64>(),
        proptest::collection::vec(any::<u64>(), 0..3),
        (any::<u32>(), any::<u32>(), any::<u32>()),
        any::<bool>(),
    )
        .prop_map(|(items, tau, family, seed, sources, (seen, ops, upd), with_source)| {
            let items: Vec<SampleItem> = items
                .into_iter()
                .map(|(item, priority)| SampleItem {
                    inclusion: family.cdf(item.weight, tau),
                    item,
                    priority,
                })
                .collect();
            let mut threshold = ThresholdState::scalar(tau);
            let threshold_item = (with_source && tau.is_finite()).then(|| SampleItem {
                inclusion: family.cdf(1.0, tau),
                item: WeightedItem::scalar("source", 1.0, 0.0).unwrap(),
                priority: Some(tau),
            });
            threshold.source_id = threshold_item.as_ref().map(|s| s.item.id.clone());
            SampleEnvelope {
                format_version: 1,
                sources,
                sample: Sample {
                    items,
                    threshold,
                    family,
                    seed,
                    threshold_item,
                    counters: Counters {
                        items_seen: u64::from(seen),
                        heap_ops: u64::from(ops),
                        threshold_updates: u64::from(upd),
                    },
                },
            }
        })
}

/// Node `j` holds ids `j*100 ..` with weights from `weights`.
fn heap_node(j: u64, k: usize, weights: &[f64], seed: u64) -> SampleEnvelope {
    let mut s = HeapSampler::new(k, PriorityFamily::UniformScaled, seed).unwrap();
    for (i, &w) in weights.iter().enumerate() {
        s.add(WeightedItem::scalar(j * 100 + i as u64, w, w).unwrap()).unwrap();
    }
    SampleEnvelope::new(s.finalize())
}

fn ids(env: &SampleEnvelope) -> BTreeSet<ItemId> {
    env.sample.items.iter().map(|s| s.item.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn jsonl_round_trip_is_identity(env in arb_envelope()) {
        let text = env.to_jsonl();
        let back = SampleEnvelope::from_jsonl(&text).unwrap();
        prop_assert_eq!(&back, &env);
        prop_assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn min_merge_matches_union_filter(
        nodes in proptest::collection::vec(proptest::collection::vec(0.1..20.0f64, 1..30), 1..5),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let envs: Vec<SampleEnvelope> = nodes
            .iter()
            .enumerate()
            .map(|(j, w)| heap_node(j as u64, k, w, seed.wrapping_add(j as u64)))
            .collect();
        let tau = envs
            .iter()
            .map(|e| e.sample.threshold.scalar_tau().unwrap())
            .fold(f64::INFINITY, f64::min);
        let expected: BTreeSet<ItemId> = envs
            .iter()
            .flat_map(|e| e.sample.items.iter())
            .filter(|s| s.priority.unwrap() < tau)
            .map(|s| s.item.id.clone())
            .collect();
        let merged = merge_samples(&envs).unwrap();
        prop_assert_eq!(merged.sample.threshold.scalar_tau(), Some(tau));
        prop_assert_eq!(ids(&merged), expected);
        prop_assert!(merged.sample.check_consistency().is_ok());
        for s in &merged.sample.items {
            prop_assert_eq!(s.inclusion, (s.item.weight * tau).min(1.0));
        }

        let mut rev = envs.clone();
        rev.reverse();
        prop_assert_eq!(ids(&merge_samples(&rev).unwrap()), ids(&merged));
        if envs.len() > 2 {
            let left = merge_samples(&envs[..2]).unwrap();
            let mut rest = vec![left];
            rest.extend_from_slice(&envs[2..]);
            prop_assert_eq!(ids(&merge_samples(&rest).unwrap()), ids(&merged));
        }

        let naive = merge_naive(&envs).unwrap();
        let kmax = envs.iter().map(|e| e.sample.len()).max().unwrap();
        prop_assert!(naive.sample.len() <= kmax);
        prop_assert!(ids(&naive).is_subset(&ids(&merged)));
        let w = waste_report(&envs, MergeStrategy::MinMerge).unwrap();
        prop_assert_eq!(w.retained, merged.sample.len());
    }
}

#[test]
fn merged_envelope_survives_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = seeded(5);
    let envs: Vec<SampleEnvelope> = (0..3)
        .map(|j| {
            let w: Vec<f64> = (0..50).map(|_| 0.5 + athres::rng::open_unit(&mut rng)).collect();
            heap_node(j, 10, &w, j)
        })
        .collect();
    let merged = merge_samples(&envs).unwrap();
    let path = dir.path().join("merged.jsonl");
    merged.write_file(&path).unwrap();
    assert_eq!(SampleEnvelope::read_file(&path).unwrap(), merged);
}
