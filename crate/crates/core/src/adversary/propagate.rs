use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{ExitObservation, LinkageGraph, Provenance, TraceMethod, TraceResult};
use crate::tor::{CircuitId, StreamId};
use crate::Endpoint;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComponentStatus {
    Untraced,
    Traced(Endpoint),
    /// Direct evidence points at more than one endpoint.
    Conflicted(Vec<Endpoint>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamTrace {
    pub stream: StreamId,
    pub circuit: CircuitId,
    pub endpoint: Endpoint,
    pub method: TraceMethod,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Propagation {
    /// Ascending by stream id.
    pub streams: Vec<StreamTrace>,
    /// Every circuit in a traced component, with the endpoint and the way it
    /// was reached.
    pub circuits: BTreeMap<CircuitId, (Endpoint, TraceMethod)>,
    /// Components (by smallest member) and their status, traced or conflicted only.
    pub components: BTreeMap<CircuitId, ComponentStatus>,
}

impl Propagation {
    pub fn conflicted(&self) -> usize {
        self.components
            .values()
            .filter(|s| matches!(s, ComponentStatus::Conflicted(_)))
            .count()
    }

    pub fn traced_stream_ids(&self) -> BTreeSet<StreamId> {
        self.streams.iter().map(|s| s.stream).collect()
    }
}

fn link_method(p: Provenance) -> TraceMethod {
    match p {
        Provenance::PeerIdMatch => TraceMethod::LinkPeerId,
        Provenance::FreshEndpointFollow => TraceMethod::LinkFreshEndpoint,
    }
}

/// Spreads direct traces over linkage components.
///
/// A stream that carried direct evidence keeps that method. Other streams on
/// a directly traced circuit count as same-circuit linkage. Circuits reached
/// only through edges take the provenance of the edge a breadth-first walk
/// from the directly traced circuits first used. In a component whose
/// direct traces disagree only the circuits with unanimous evidence of their
/// own stay traced.
pub fn propagate_traces(
    graph: &LinkageGraph,
    results: &[TraceResult],
    observations: &[ExitObservation],
) -> Propagation {
    let mut direct: BTreeMap<CircuitId, Vec<&TraceResult>> = BTreeMap::new();
    for r in results {
        direct.entry(r.circuit).or_default().push(r);
    }
    let mut endpoints: BTreeMap<CircuitId, BTreeSet<Endpoint>> = BTreeMap::new();
    for (&c, rs) in &direct {
        endpoints
            .entry(graph.find(c))
            .or_default()
            .extend(rs.iter().map(|r| r.traced_endpoint));
    }

    let mut adjacency: HashMap<CircuitId, Vec<(CircuitId, Provenance)>> = HashMap::new();
    for e in graph.edges() {
        adjacency
            .entry(e.from)
            .or_default()
            .push((e.to, e.provenance));
        adjacency
            .entry(e.to)
            .or_default()
            .push((e.from, e.provenance));
    }

    let mut out = Propagation::default();
    let smallest: HashMap<CircuitId, CircuitId> = graph
        .components()
        .into_iter()
        .map(|(min, members)| (graph.find(members[0]), min))
        .collect();
    let mut root_status: HashMap<CircuitId, Option<Endpoint>> = HashMap::new();
    let mut queue = VecDeque::new();
    for (root, eps) in &endpoints {
        let label = smallest.get(root).copied().unwrap_or(*root);
        if eps.len() == 1 {
            let ep = *eps.iter().next().expect("one");
            root_status.insert(*root, Some(ep));
            out.components.insert(label, ComponentStatus::Traced(ep));
        } else {
            root_status.insert(*root, None);
            out.components.insert(
                label,
                ComponentStatus::Conflicted(eps.iter().copied().collect()),
            );
        }
    }
    for (&c, rs) in &direct {
        match root_status.get(&graph.find(c)) {
            Some(Some(ep)) => {
                out.circuits.insert(c, (*ep, rs[0].method));
                queue.push_back(c);
            }
            // A conflicted component spreads nothing, but a circuit whose own
            // evidence agrees keeps it.
            _ if rs
                .iter()
                .all(|r| r.traced_endpoint == rs[0].traced_endpoint) =>
            {
                out.circuits
                    .insert(c, (rs[0].traced_endpoint, rs[0].method));
            }
            _ => {}
        }
    }
    while let Some(c) = queue.pop_front() {
        let ep = out.circuits[&c].0;
        for &(n, p) in adjacency.get(&c).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(v) = out.circuits.entry(n) {
                v.insert((ep, link_method(p)));
                queue.push_back(n);
            }
        }
    }

    let evidence: HashMap<StreamId, TraceMethod> =
        results.iter().rev().map(|r| (r.stream, r.method)).collect();
    for o in observations {
        let Some(&(endpoint, circuit_method)) = out.circuits.get(&o.circuit) else {
            continue;
        };
        let method = match evidence.get(&o.stream) {
            Some(&m) if direct.contains_key(&o.circuit) => m,
            _ if direct.contains_key(&o.circuit) => TraceMethod::LinkSameCircuit,
            _ => circuit_method,
        };
        out.streams.push(StreamTrace {
            stream: o.stream,
            circuit: o.circuit,
            endpoint,
            method,
        });
    }
    out.streams.sort_by_key(|s| s.stream);
    out.streams.dedup_by_key(|s| s.stream);
    out
}
