mod common;

use std::collections::BTreeMap;

use mcrts_core::harness::{generate, LoadProfile};
use mcrts_core::kernel::{outcomes_from_log, resolve, response_time, run, EventKind, Response, Trace, Variant};
use mcrts_core::network::{traversal_time, NetworkOverlay};
use proptest::prelude::*;

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Mcrts), Just(Variant::NoPreemption), Just(Variant::StaticRoute)]
}

fn load_strategy() -> impl Strategy<Value = LoadProfile> {
    prop_oneof![Just(LoadProfile::Light), Just(LoadProfile::Default), Just(LoadProfile::Heavy)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_is_causal_and_consistent(
        n in 3usize..6,
        gen_seed in any::<u64>(),
        seed in any::<u64>(),
        variant in variant_strategy(),
        load in load_strategy(),
    ) {
        let sc = common::grid_scenario(n, gen_seed, load);
        let t = run(&sc, seed, variant).unwrap();

        // clock never goes backwards, seq is dense
        for (i, pair) in t.records.windows(2).enumerate() {
            prop_assert!(pair[0].t_ms <= pair[1].t_ms, "record {i}");
            prop_assert_eq!(pair[0].seq + 1, pair[1].seq);
        }

        // every vehicle drives a contiguous path from its start node and
        // holds at most one edge at a time
        let mut at: BTreeMap<String, String> =
            sc.document.fleet.iter().map(|f| (f.id.clone(), f.node.clone())).collect();
        let mut on_edge: BTreeMap<String, (String, i64)> = BTreeMap::new();
        for r in &t.records {
            let Some(v) = r.str_field("vehicle") else { continue };
            match r.kind {
                EventKind::EdgeEntered => {
                    prop_assert!(!on_edge.contains_key(v), "{v} entered while on an edge");
                    let edge = sc.net.edge(sc.net.edge_idx(r.str_field("edge").unwrap()).unwrap());
                    prop_assert_eq!(&edge.from_node, &at[v]);
                    let tt = r.f64_field("tt_s").unwrap();
                    let exit_ms = r.data["exit_ms"].as_i64().unwrap();
                    prop_assert_eq!(exit_ms, r.t_ms + (tt * 1000.0).round() as i64);
                    on_edge.insert(v.to_string(), (edge.id.clone(), exit_ms));
                }
                EventKind::EdgeExited => {
                    let (edge, exit_ms) = on_edge.remove(v).expect("exit without entry");
                    prop_assert_eq!(Some(edge.as_str()), r.str_field("edge"));
                    prop_assert_eq!(exit_ms, r.t_ms);
                    let e = sc.net.edge(sc.net.edge_idx(&edge).unwrap());
                    at.insert(v.to_string(), e.to_node.clone());
                }
                _ => {}
            }
        }

        // dispatch only after arrival and only for idle vehicles; a vehicle
        // goes idle -> en route -> serving -> idle
        let mut arrived = std::collections::BTreeSet::new();
        let mut busy: BTreeMap<String, &str> = BTreeMap::new();
        for r in &t.records {
            match r.kind {
                EventKind::RequestArrival => {
                    arrived.insert(r.request().unwrap().to_string());
                }
                EventKind::Dispatch => {
                    prop_assert!(arrived.contains(r.request().unwrap()));
                    let v = r.str_field("vehicle").unwrap().to_string();
                    prop_assert!(busy.insert(v, "en_route").is_none(), "dispatched a busy vehicle");
                }
                EventKind::ServiceCompleted => {
                    let v = r.str_field("vehicle").unwrap();
                    prop_assert_eq!(busy.insert(v.to_string(), "serving"), Some("en_route"));
                }
                EventKind::VehicleReleased => {
                    prop_assert_eq!(busy.remove(r.str_field("vehicle").unwrap()), Some("serving"));
                }
                _ => {}
            }
            prop_assert!(busy.len() <= sc.document.fleet.len());
        }

        // outcomes agree with the raw log
        for o in &t.outcomes {
            let expect = match response_time(&t, &o.request).unwrap() {
                Response::Seconds(s) => Some(s),
                Response::Unserved => None,
            };
            prop_assert_eq!(o.response_time_s, expect);
            if let Some(resp) = o.response_time_s {
                prop_assert!(resp >= 0.0);
            }
        }
        prop_assert_eq!(&t.outcomes, &outcomes_from_log(&t.records));
        prop_assert_eq!(t.outcomes.len(), sc.document.requests.len());

        // every escalation is preceded by a reevaluation at the same instant
        for (i, r) in t.records.iter().enumerate() {
            if r.kind == EventKind::EscalationApplied {
                let prev = t.records[..i].iter().rev().find(|p| p.kind == EventKind::Reevaluation);
                prop_assert!(prev.is_some_and(|p| p.t_ms == r.t_ms && p.request() == r.request()));
            }
        }

        // the trace round-trips through NDJSON
        let back = Trace::from_ndjson(&t.to_ndjson()).unwrap();
        prop_assert_eq!(back.digest(), t.digest());
    }

    #[test]
    fn baseline_motion_matches_static_traversal(n in 3usize..6, gen_seed in any::<u64>(), seed in any::<u64>()) {
        // without background drift or scripted updates the state never
        // changes, and without pre-emption there is no overlay
        let mut doc = generate(n, gen_seed, LoadProfile::Default).unwrap();
        doc.background = None;
        doc.updates.clear();
        let sc = resolve(doc, None).unwrap();
        let t = run(&sc, seed, Variant::NoPreemption).unwrap();
        for r in t.records.iter().filter(|r| r.kind == EventKind::EdgeEntered) {
            let e = sc.net.edge_idx(r.str_field("edge").unwrap()).unwrap();
            let want = traversal_time(&sc.net, e, r.time_s(), &sc.initial, &NetworkOverlay::new()).unwrap();
            prop_assert_eq!(Some(r.f64_field("tt_s").unwrap()), want.finite());
        }
        prop_assert!(t.records.iter().all(|r| r.f64_field("charged_veh_s").is_none_or(|c| c == 0.0)));
    }

    #[test]
    fn same_seed_same_digest(n in 3usize..5, gen_seed in any::<u64>(), seed in any::<u64>(), variant in variant_strategy()) {
        let sc = common::grid_scenario(n, gen_seed, LoadProfile::Default);
        prop_assert_eq!(run(&sc, seed, variant).unwrap().digest(), run(&sc, seed, variant).unwrap().digest());
    }
}

#[test]
fn static_route_stalls_at_halted_edge() {
    let (sc, _, halted) = common::halt_scenario(3);
    let t = run(&sc, 3, Variant::StaticRoute).unwrap();
    assert!(!t.records.iter().any(|r| r.kind == EventKind::Reevaluation));
    assert!(t.records.iter().any(|r| r.kind == EventKind::EntryBlocked && r.str_field("edge") == Some(halted)));
    assert_eq!(t.outcome("r1").unwrap().response_time_s, None);
}
