//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::Rng;

use onion_trace::adversary::{ExitObservation, TraceLogRecord, TraceMethod, TraceResult};
use onion_trace::tor::{CircuitId, StreamId};
use onion_trace::wire::BValue;
use onion_trace::Endpoint;

pub fn random_bytes<R: Rng>(rng: &mut R, max: usize) -> Vec<u8> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen()).collect()
}

/// A random tree with at most `depth` levels of nesting.
pub fn random_bvalue<R: Rng>(rng: &mut R, depth: u32) -> BValue {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    match (leaf, rng.gen_range(0..2)) {
        (true, 0) => BValue::Bytes(random_bytes(rng, 24)),
        (true, _) => BValue::Int(match rng.gen_range(0..4) {
            0 => 0,
            1 => i64::MIN,
            2 => i64::MAX,
            _ => rng.gen(),
        }),
        (false, 0) => BValue::List(
            (0..rng.gen_range(0..5))
                .map(|_| random_bvalue(rng, depth - 1))
                .collect(),
        ),
        (false, _) => BValue::Dict(
            (0..rng.gen_range(0..5))
                .map(|_| (random_bytes(rng, 8), random_bvalue(rng, depth - 1)))
                .collect(),
        ),
    }
}

pub fn random_endpoints<R: Rng>(rng: &mut R, max: usize) -> Vec<Endpoint> {
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| Endpoint::new(Ipv4Addr::from(rng.gen::<u32>()), rng.gen()))
        .collect()
}

/// What the oracle expects for one traced stream. `methods` lists every
/// method the stream may legitimately carry.
#[derive(Debug, PartialEq, Eq)]
pub struct Expected {
    pub endpoint: Endpoint,
    pub methods: BTreeSet<TraceMethod>,
}

fn link_method(p: onion_trace::adversary::Provenance) -> TraceMethod {
    match p {
        onion_trace::adversary::Provenance::PeerIdMatch => TraceMethod::LinkPeerId,
        onion_trace::adversary::Provenance::FreshEndpointFollow => TraceMethod::LinkFreshEndpoint,
    }
}

/// Connected components by breadth-first search over an explicit edge list,
/// then the closure rule stream by stream: a component whose direct traces
/// name one endpoint traces every stream in it; otherwise only circuits
/// whose own traces agree stay traced.
pub fn closure_oracle(
    edges: &[(CircuitId, CircuitId, TraceMethod)],
    results: &[TraceResult],
    observations: &[(CircuitId, StreamId)],
) -> BTreeMap<StreamId, Expected> {
    let mut adj: HashMap<CircuitId, Vec<(CircuitId, TraceMethod)>> = HashMap::new();
    for &(a, b, m) in edges {
        adj.entry(a).or_default().push((b, m));
        adj.entry(b).or_default().push((a, m));
    }
    let mut nodes: BTreeSet<CircuitId> = adj.keys().copied().collect();
    nodes.extend(results.iter().map(|r| r.circuit));
    nodes.extend(observations.iter().map(|o| o.0));

    let mut component: HashMap<CircuitId, usize> = HashMap::new();
    let mut n_components = 0;
    for &start in &nodes {
        if component.contains_key(&start) {
            continue;
        }
        let id = n_components;
        n_components += 1;
        component.insert(start, id);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for &(n, _) in adj.get(&c).into_iter().flatten() {
                if let std::collections::hash_map::Entry::Vacant(v) = component.entry(n) {
                    v.insert(id);
                    queue.push_back(n);
                }
            }
        }
    }

    let mut by_circuit: HashMap<CircuitId, Vec<&TraceResult>> = HashMap::new();
    let mut comp_eps: HashMap<usize, BTreeSet<Endpoint>> = HashMap::new();
    for r in results {
        by_circuit.entry(r.circuit).or_default().push(r);
        comp_eps
            .entry(component[&r.circuit])
            .or_default()
            .insert(r.traced_endpoint);
    }
    let mut first_method: HashMap<StreamId, TraceMethod> = HashMap::new();
    for r in results {
        first_method.entry(r.stream).or_insert(r.method);
    }

    let mut out = BTreeMap::new();
    for &(circuit, stream) in observations {
        let eps = comp_eps.get(&component[&circuit]);
        let own = by_circuit.get(&circuit);
        let endpoint = match (eps, own) {
            (Some(eps), _) if eps.len() == 1 => *eps.iter().next().unwrap(),
            (Some(_), Some(rs))
                if rs
                    .iter()
                    .all(|r| r.traced_endpoint == rs[0].traced_endpoint) =>
            {
                rs[0].traced_endpoint
            }
            _ => continue,
        };
        let methods: BTreeSet<TraceMethod> = match own {
            Some(_) => [first_method
                .get(&stream)
                .copied()
                .unwrap_or(TraceMethod::LinkSameCircuit)]
            .into(),
            None => adj[&circuit].iter().map(|&(_, m)| m).collect(),
        };
        out.entry(stream).or_insert(Expected { endpoint, methods });
    }
    out
}

/// Edges as the trace log records them.
pub fn edges_from_log(log: &[TraceLogRecord]) -> Vec<(CircuitId, CircuitId, TraceMethod)> {
    log.iter()
        .filter_map(|r| match r {
            TraceLogRecord::Union {
                a, b, provenance, ..
            } => Some((CircuitId(*a), CircuitId(*b), link_method(*provenance))),
            _ => None,
        })
        .collect()
}

pub fn edges_of(
    graph_edges: &[onion_trace::adversary::LinkEdge],
) -> Vec<(CircuitId, CircuitId, TraceMethod)> {
    graph_edges
        .iter()
        .map(|e| (e.from, e.to, link_method(e.provenance)))
        .collect()
}

pub fn observation_keys(observations: &[ExitObservation]) -> Vec<(CircuitId, StreamId)> {
    observations.iter().map(|o| (o.circuit, o.stream)).collect()
}

/// Files under `dir` (recursively) whose text contains any of `needles`,
/// with the first needle found.
pub fn files_containing(dir: &Path, needles: &[String]) -> Vec<(String, String)> {
    let mut hits = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let text = String::from_utf8_lossy(&std::fs::read(&p).unwrap()).into_owned();
            if let Some(n) = needles.iter().find(|n| contains_token(&text, n)) {
                hits.push((p.display().to_string(), n.clone()));
            }
        }
    }
    hits
}

/// `needle` appears in `text` not glued to further digits or dots, so
/// 10.0.0.1 does not match inside 10.0.0.12.
fn contains_token(text: &str, needle: &str) -> bool {
    let bytes = text.as_bytes();
    let glued = |b: u8| b.is_ascii_digit() || b == b'.';
    text.match_indices(needle).any(|(i, _)| {
        let before = i.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i + needle.len()).copied();
        !before.is_some_and(glued) && !after.is_some_and(glued)
    })
}

/// A random linkage graph over `n_circuits` circuits with `n_streams`
/// observations, `n_edges` edges and `n_results` direct traces naming one
/// of `n_endpoints` endpoints.
pub struct Synthetic {
    pub graph: onion_trace::adversary::LinkageGraph,
    pub results: Vec<TraceResult>,
    pub observations: Vec<ExitObservation>,
}

pub fn synthetic<R: Rng>(
    rng: &mut R,
    n_circuits: u32,
    n_streams: u32,
    n_edges: usize,
    n_results: usize,
    n_endpoints: u8,
) -> Synthetic {
    use onion_trace::adversary::{LinkageGraph, Provenance};
    use onion_trace::sim::SimTime;
    use onion_trace::tor::RelayId;
    use onion_trace::wire::StreamClass;

    let mut graph = LinkageGraph::new(SimTime::from_secs(120));
    for c in 0..n_circuits {
        graph.touch(CircuitId(c));
    }
    let observations: Vec<ExitObservation> = (0..n_streams)
        .map(|s| ExitObservation {
            seq: u64::from(s),
            circuit: CircuitId(rng.gen_range(0..n_circuits)),
            stream: StreamId(s),
            exit: RelayId(0),
            destination: Endpoint::new(Ipv4Addr::new(8, 8, 8, 8), 80),
            class: StreamClass::Other,
            extracted: None,
            at: SimTime::from_secs(u64::from(s)),
            announce_peers: vec![],
            response: None,
        })
        .collect();
    for _ in 0..n_edges {
        let a = CircuitId(rng.gen_range(0..n_circuits));
        let b = CircuitId(rng.gen_range(0..n_circuits));
        if a != b {
            let p = if rng.gen_bool(0.5) {
                Provenance::PeerIdMatch
            } else {
                Provenance::FreshEndpointFollow
            };
            graph.union(a, b, p, SimTime::ZERO);
        }
    }
    let results = (0..n_results)
        .filter(|_| !observations.is_empty())
        .map(|_| {
            let o = &observations[rng.gen_range(0..observations.len())];
            TraceResult {
                circuit: o.circuit,
                stream: o.stream,
                traced_endpoint: Endpoint::new(
                    Ipv4Addr::new(10, 0, 0, rng.gen_range(1..=n_endpoints)),
                    40000,
                ),
                method: if rng.gen_bool(0.5) {
                    TraceMethod::Hijack
                } else {
                    TraceMethod::DhtPortMatch
                },
                at: o.at,
            }
        })
        .collect();
    Synthetic {
        graph,
        results,
        observations,
    }
}

/// Streams where `propagate_traces` and the oracle disagree.
pub fn oracle_mismatches(
    got: &onion_trace::adversary::Propagation,
    expected: &BTreeMap<StreamId, Expected>,
) -> Vec<StreamId> {
    let got: BTreeMap<StreamId, _> = got.streams.iter().map(|s| (s.stream, s)).collect();
    let mut bad: Vec<StreamId> = got
        .keys()
        .filter(|k| !expected.contains_key(k))
        .copied()
        .collect();
    for (id, e) in expected {
        match got.get(id) {
            Some(s) if s.endpoint == e.endpoint && e.methods.contains(&s.method) => {}
            _ => bad.push(*id),
        }
    }
    bad
}
