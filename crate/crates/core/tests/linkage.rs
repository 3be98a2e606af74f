mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use onion_trace::adversary::{propagate_traces, ComponentStatus, Provenance};
use onion_trace::sim::SimTime;
use onion_trace::tor::CircuitId;

proptest! {
    #[test]
    fn closure_equals_components_oracle(
        seed in any::<u64>(),
        circuits in 1u32..60,
        streams in 0u32..200,
        edges in 0usize..80,
        results in 0usize..20,
        endpoints in 1u8..4,
    ) {
        let s = common::synthetic(&mut ChaCha8Rng::seed_from_u64(seed), circuits, streams, edges, results, endpoints);
        let p = propagate_traces(&s.graph, &s.results, &s.observations);
        let expected = common::closure_oracle(
            &common::edges_of(s.graph.edges()),
            &s.results,
            &common::observation_keys(&s.observations),
        );
        prop_assert!(common::oracle_mismatches(&p, &expected).is_empty());
    }

    #[test]
    fn every_traced_circuit_has_direct_evidence_in_its_component(
        seed in any::<u64>(),
        circuits in 1u32..60,
        edges in 0usize..80,
        results in 0usize..20,
    ) {
        let s = common::synthetic(&mut ChaCha8Rng::seed_from_u64(seed), circuits, 150, edges, results, 2);
        let p = propagate_traces(&s.graph, &s.results, &s.observations);
        let direct_roots: BTreeSet<CircuitId> = s.results.iter().map(|r| s.graph.find(r.circuit)).collect();
        for c in p.circuits.keys() {
            prop_assert!(direct_roots.contains(&s.graph.find(*c)));
        }
    }

    // Merging two components can only grow the traced set unless it brings
    // two different endpoints together.
    #[test]
    fn agreeing_edges_never_shrink_the_traced_set(
        seed in any::<u64>(),
        circuits in 2u32..60,
        edges in 0usize..60,
        results in 0usize..20,
        a in any::<u32>(),
        b in any::<u32>(),
    ) {
        let mut s = common::synthetic(&mut ChaCha8Rng::seed_from_u64(seed), circuits, 150, edges, results, 1);
        let before = propagate_traces(&s.graph, &s.results, &s.observations).traced_stream_ids();
        let (a, b) = (CircuitId(a % circuits), CircuitId(b % circuits));
        prop_assume!(a != b);
        s.graph.union(a, b, Provenance::PeerIdMatch, SimTime::ZERO);
        let after = propagate_traces(&s.graph, &s.results, &s.observations).traced_stream_ids();
        prop_assert!(after.is_superset(&before));
    }
}

#[test]
fn conflicting_merge_shrinks_the_traced_set() {
    let mut s = common::synthetic(&mut ChaCha8Rng::seed_from_u64(3), 3, 0, 0, 0, 1);
    use onion_trace::adversary::{ExitObservation, TraceMethod, TraceResult};
    use onion_trace::tor::{RelayId, StreamId};
    use onion_trace::wire::StreamClass;
    use onion_trace::Endpoint;
    use std::net::Ipv4Addr;
    let obs = |c: u32, st: u32| ExitObservation {
        seq: u64::from(st),
        circuit: CircuitId(c),
        stream: StreamId(st),
        exit: RelayId(0),
        destination: Endpoint::new(Ipv4Addr::new(8, 8, 8, 8), 80),
        class: StreamClass::Other,
        extracted: None,
        at: SimTime::ZERO,
        announce_peers: vec![],
        response: None,
    };
    s.observations = vec![obs(0, 0), obs(0, 1), obs(1, 2), obs(1, 3), obs(2, 4)];
    s.graph.union(
        CircuitId(0),
        CircuitId(2),
        Provenance::PeerIdMatch,
        SimTime::ZERO,
    );
    s.results = (0..2)
        .map(|c| TraceResult {
            circuit: CircuitId(c),
            stream: StreamId(2 * c),
            traced_endpoint: Endpoint::new(Ipv4Addr::new(10, 0, 0, c as u8 + 1), 40000),
            method: TraceMethod::Hijack,
            at: SimTime::ZERO,
        })
        .collect();
    assert_eq!(
        propagate_traces(&s.graph, &s.results, &s.observations)
            .streams
            .len(),
        5
    );
    s.graph.union(
        CircuitId(0),
        CircuitId(1),
        Provenance::FreshEndpointFollow,
        SimTime::ZERO,
    );
    let p = propagate_traces(&s.graph, &s.results, &s.observations);
    // Each directly traced circuit keeps its own evidence; circuit 2 was
    // reached only through the now conflicted component and drops out.
    let ids: Vec<u32> = p.streams.iter().map(|t| t.stream.0).collect();
    assert_eq!(ids, [0, 1, 2, 3]);
    assert!(
        matches!(p.components.values().next(), Some(ComponentStatus::Conflicted(eps)) if eps.len() == 2)
    );
}
