mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;

use onion_trace::adversary::{ExitObservation, TraceMethod};
use onion_trace::analysis::{analyze, write_run_report};
use onion_trace::scenario::{run, PolicyName, RunOutput, ScenarioConfig};
use onion_trace::sim::SimTime;
use onion_trace::tor::{CircuitId, ExitView, PortGroups};

fn config(overrides: &[&str]) -> ScenarioConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::from_toml_str("", &o).unwrap()
}

fn small(extra: &[&str]) -> ScenarioConfig {
    let mut o = vec![
        "bittorrent.n_peers=600",
        "bittorrent.catalog.n_items=3000",
        "web.n_web_only_users=80",
        "virtual_duration_s=3600",
    ];
    o.extend_from_slice(extra);
    config(&o)
}

fn report_bytes(out: &RunOutput) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let report = analyze(out).unwrap();
    write_run_report(dir.path(), &report, out)
        .unwrap()
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn equal_seeds_give_identical_logs_and_reports() {
    let cfg = small(&["sim.event_log=true", "seed=11"]);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    let (la, lb) = (a.event_log.as_ref().unwrap(), b.event_log.as_ref().unwrap());
    assert!(!la.records.is_empty());
    assert_eq!(la.to_ndjson(), lb.to_ndjson());
    let (ra, rb) = (report_bytes(&a), report_bytes(&b));
    assert!(ra.keys().any(|k| k.ends_with("-events.ndjson")));
    assert_eq!(ra, rb);

    let c = run(&cfg.clone().with_seed(12)).unwrap();
    assert_ne!(la.to_ndjson(), c.event_log.unwrap().to_ndjson());
}

#[test]
fn clock_never_runs_backwards() {
    let out = run(&small(&["sim.event_log=true"])).unwrap();
    let ticks: Vec<u64> = out
        .event_log
        .unwrap()
        .records
        .iter()
        .map(|r| r.tick)
        .collect();
    assert!(ticks.windows(2).all(|w| w[0] <= w[1]));
    assert!(*ticks.last().unwrap() <= SimTime::from_secs(3600).ticks());
}

#[test]
fn user_endpoints_are_unique() {
    let out = run(&small(&[])).unwrap();
    let mut seen = HashSet::new();
    for u in out.truth.users.values() {
        assert!(seen.insert(u.endpoint), "{} twice", u.endpoint);
    }
}

// Adding an owner field to either type breaks these patterns at compile time.
#[allow(dead_code)]
fn exit_view_fields(v: ExitView) {
    let ExitView {
        circuit: _,
        stream: _,
        exit: _,
        destination: _,
        payload_prefix: _,
        class: _,
        at: _,
    } = v;
}

#[allow(dead_code)]
fn observation_fields(o: ExitObservation) {
    let ExitObservation {
        seq: _,
        circuit: _,
        stream: _,
        exit: _,
        destination: _,
        class: _,
        extracted: _,
        at: _,
        announce_peers: _,
        response: _,
    } = o;
}

#[test]
fn adversary_input_has_no_owner() {
    // The patterns above are the real check; this keeps them referenced.
    let _ = exit_view_fields as fn(ExitView);
    let _ = observation_fields as fn(ExitObservation);
    let out = run(&small(&[])).unwrap();
    assert!(!out.adversary.observations.is_empty());
}

#[test]
fn dht_traffic_never_uses_circuits() {
    let out = run(&small(&[])).unwrap();
    assert!(out.stats.dht_messages > 0);
    assert_eq!(out.stats.dht_messages_from_exits, 0);
}

#[test]
fn swarm_entries_match_owners() {
    let out = run(&small(&[])).unwrap();
    assert!(out.stats.downloads_started > 0);
    assert_eq!(out.stats.untruthful_subscriptions, 0);
}

#[test]
fn exit_share_of_tor_peer_connections_follows_mix() {
    let (mut from_tor, mut via_exit) = (0, 0);
    for seed in 1..=4 {
        let out = run(&config(&[&format!("seed={seed}")])).unwrap();
        from_tor += out.stats.p2p_from_tor_users;
        via_exit += out.stats.p2p_from_tor_users_via_exit;
    }
    let share = via_exit as f64 / from_tor as f64;
    assert!(
        (share - 0.28).abs() <= 0.03,
        "exit share {share:.4} over {from_tor} connections"
    );
}

#[test]
fn circuits_respect_their_policy() {
    for policy in PolicyName::ALL {
        let cfg = small(&[]).with_policy(policy);
        let out = run(&cfg).unwrap();
        let mut by_circuit: HashMap<CircuitId, Vec<_>> = HashMap::new();
        for s in &out.truth.streams {
            by_circuit.entry(s.circuit).or_default().push(s);
        }
        assert!(!by_circuit.is_empty());
        let groups = PortGroups::new(cfg.tor.port_groups.clone()).unwrap();
        let lifetime = SimTime::from_secs(cfg.tor.circuit_lifetime_s);
        for (c, streams) in &by_circuit {
            let owners: BTreeSet<_> = streams.iter().map(|s| s.owner).collect();
            assert_eq!(owners.len(), 1, "{c:?} shared between hosts");
            let first = streams.iter().map(|s| s.opened_at).min().unwrap();
            let last = streams.iter().map(|s| s.opened_at).max().unwrap();
            assert!(
                last.saturating_sub(first) <= lifetime,
                "{c:?} outlived its lifetime"
            );
            match policy {
                PolicyName::OneStreamPerCircuit => assert_eq!(streams.len(), 1),
                PolicyName::PortGroupIsolation => {
                    let g: BTreeSet<usize> = streams
                        .iter()
                        .map(|s| groups.group_of(s.dst_port))
                        .collect();
                    assert_eq!(g.len(), 1, "{c:?} mixes port groups");
                }
                PolicyName::PerApplicationIsolation => {
                    let apps: BTreeSet<_> = streams.iter().map(|s| s.app).collect();
                    assert_eq!(apps.len(), 1, "{c:?} mixes applications");
                }
                PolicyName::MultiplexAll => {}
            }
        }
    }
}

#[test]
fn direct_traces_name_the_owner() {
    let out = run(&config(&[])).unwrap();
    let direct: Vec<_> = out.adversary.results.iter().collect();
    assert!(direct.iter().any(|r| r.method == TraceMethod::Hijack));
    assert!(direct.iter().any(|r| r.method == TraceMethod::DhtPortMatch));
    for r in direct {
        let owner = out.truth.owner_of(r.circuit).unwrap();
        assert_eq!(
            r.traced_endpoint, owner.endpoint,
            "{:?} on {:?}",
            r.method, r.circuit
        );
    }
}

#[test]
fn propagation_matches_closure_oracle() {
    let out = run(&small(&["tor.instrumented_exits=[0,1,2,3,4,5,6,7,8,9]"])).unwrap();
    let adv = &out.adversary;
    let expected = common::closure_oracle(
        &common::edges_from_log(&adv.trace_log),
        &adv.results,
        &common::observation_keys(&adv.observations),
    );
    assert!(!expected.is_empty());
    let got: BTreeMap<_, _> = adv
        .propagation
        .streams
        .iter()
        .map(|s| (s.stream, s))
        .collect();
    assert_eq!(
        got.keys().collect::<Vec<_>>(),
        expected.keys().collect::<Vec<_>>()
    );
    for (id, e) in &expected {
        assert_eq!(got[id].endpoint, e.endpoint);
        assert!(
            e.methods.contains(&got[id].method),
            "{id:?}: {:?} not in {:?}",
            got[id].method,
            e.methods
        );
    }
}

#[test]
fn over_representation_identity_holds() {
    let report = analyze(&run(&config(&[])).unwrap()).unwrap();
    assert!(!report.over_country.is_empty());
    for row in report.over_country.iter().chain(&report.over_asn) {
        if let Some(over) = row.over {
            assert!(
                (over * row.share_baseline - row.share_on_tor).abs() < 1e-9,
                "{}",
                row.key
            );
        }
    }
}

#[test]
fn reports_hold_no_user_endpoint() {
    let out = run(&small(&["sim.event_log=true"])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_report(dir.path(), &analyze(&out).unwrap(), &out).unwrap();
    let mut needles: Vec<String> = out
        .truth
        .users
        .values()
        .map(|u| u.endpoint.to_string())
        .collect();
    needles.extend(out.truth.users.values().map(|u| u.endpoint.ip.to_string()));
    assert!(!needles.is_empty());
    let hits = common::files_containing(dir.path(), &needles);
    assert!(hits.is_empty(), "{hits:?}");
}
