//! The instrumented exits and the malicious peer: tracker-response
//! hijacking, DHT port matching and stream linkage.

mod dht_match;
mod hijack;
mod linkage;
mod observation;
mod propagate;
mod trace;
mod union_find;

use std::collections::{HashMap, HashSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

pub use dht_match::{dht_port_match, simulate_port_match, unique_port_probability, PORT_SPACE};
pub use hijack::{hijack_peers, AmbiguousCorrelation, HijackRecord, Hijacker};
pub use linkage::{FreshEndpointIndex, LinkEdge, LinkageGraph, Provenance};
pub use observation::ExitObservation;
pub use propagate::{propagate_traces, ComponentStatus, Propagation, StreamTrace};
pub use trace::{trace_log_ndjson, TraceLogRecord, TraceMethod, TraceResult};
pub use union_find::DisjointSet;

use crate::bt::DhtTracker;
use crate::sim::SimTime;
use crate::tor::{CircuitId, ExitView, RelayId, StreamId};
use crate::wire::{AnnounceResponse, BtHandshake, StreamClass};
use crate::{Endpoint, InfoHash};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    pub enabled: bool,
    pub hijack: bool,
    pub dht_port_match: bool,
    pub link_peer_id: bool,
    pub link_fresh_endpoint: bool,
    /// Hijack correlation and endpoint freshness window, seconds.
    pub window_s: u64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hijack: true,
            dht_port_match: true,
            link_peer_id: true,
            link_fresh_endpoint: true,
            window_s: 120,
        }
    }
}

/// Adversary state for one run. It is fed only exit views, tracker answers
/// crossing the hijacking exit and connections reaching the malicious peer.
pub struct Adversary {
    config: AdversaryConfig,
    hijack_exit: Option<RelayId>,
    exit_list: HashSet<Ipv4Addr>,
    hijacker: Option<Hijacker>,
    own: Endpoint,
    graph: LinkageGraph,
    observations: Vec<ExitObservation>,
    by_stream: HashMap<StreamId, usize>,
    results: Vec<TraceResult>,
    looked_up: HashSet<(CircuitId, InfoHash)>,
    log: Vec<TraceLogRecord>,
    ambiguous: usize,
    seq: u64,
}

impl Adversary {
    /// `own` is the address the adversary uses for DHT queries and for the
    /// malicious peer; `exit_list` is the public list of exit addresses.
    pub fn new(
        config: AdversaryConfig,
        hijack_exit: Option<RelayId>,
        own: Endpoint,
        exit_list: HashSet<Ipv4Addr>,
    ) -> Self {
        let window = SimTime::from_secs(config.window_s);
        let hijacker = (config.enabled && config.hijack && hijack_exit.is_some())
            .then(|| Hijacker::new(own, window));
        let mut graph = LinkageGraph::new(window);
        graph.link_peer_id = config.link_peer_id;
        graph.link_fresh_endpoint = config.link_fresh_endpoint;
        Self {
            config,
            hijack_exit,
            exit_list,
            hijacker,
            own,
            graph,
            observations: Vec::new(),
            by_stream: HashMap::new(),
            results: Vec::new(),
            looked_up: HashSet::new(),
            log: Vec::new(),
            ambiguous: 0,
            seq: 0,
        }
    }

    pub fn config(&self) -> &AdversaryConfig {
        &self.config
    }

    pub fn malicious_endpoint(&self) -> Option<Endpoint> {
        self.hijacker.as_ref().map(Hijacker::malicious)
    }

    pub fn observations(&self) -> &[ExitObservation] {
        &self.observations
    }

    pub fn results(&self) -> &[TraceResult] {
        &self.results
    }

    pub fn graph(&self) -> &LinkageGraph {
        &self.graph
    }

    pub fn trace_log(&self) -> &[TraceLogRecord] {
        &self.log
    }

    pub fn ambiguous_correlations(&self) -> usize {
        self.ambiguous
    }

    pub fn hijacker(&self) -> Option<&Hijacker> {
        self.hijacker.as_ref()
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn push_result(&mut self, r: TraceResult) {
        self.log.push(TraceLogRecord::Trace {
            tick: r.at.ticks(),
            circuit: r.circuit.0,
            stream: r.stream.0,
            method: r.method,
        });
        self.results.push(r);
    }

    /// Takes in the first payload of a stream at an instrumented exit.
    pub fn observe(&mut self, view: &ExitView, dht: &mut DhtTracker) {
        if !self.config.enabled {
            return;
        }
        let seq = self.next_seq();
        let obs = ExitObservation::from_view(view, seq);
        for e in self.graph.link_observation(&obs) {
            self.log.push(TraceLogRecord::Union {
                tick: e.at.ticks(),
                a: e.from.0,
                b: e.to.0,
                provenance: e.provenance,
                merged: e.merged,
            });
        }
        if self.config.dht_port_match
            && matches!(
                obs.class,
                StreamClass::TrackerAnnounce | StreamClass::BtHandshake
            )
        {
            if let (Some(ih), Some(port)) = (obs.info_hash(), obs.listening_port()) {
                if self.looked_up.insert((obs.circuit, ih)) {
                    let swarm = dht.lookup(ih, self.own, obs.at);
                    if let Some(ep) = dht_port_match(port, &swarm) {
                        self.push_result(TraceResult {
                            circuit: obs.circuit,
                            stream: obs.stream,
                            traced_endpoint: ep,
                            method: TraceMethod::DhtPortMatch,
                            at: obs.at,
                        });
                    }
                }
            }
        }
        self.by_stream.insert(obs.stream, self.observations.len());
        self.observations.push(obs);
    }

    /// A tracker answer on its way back through an exit. Returns the bytes
    /// the exit forwards, rewritten if this is the hijacking exit.
    pub fn intercept_response(&mut self, stream: StreamId, bytes: &[u8], at: SimTime) -> Vec<u8> {
        let Some(&idx) = self.by_stream.get(&stream) else {
            return bytes.to_vec();
        };
        let (circuit, exit, info_hash) = {
            let o = &self.observations[idx];
            if o.class != StreamClass::TrackerAnnounce {
                return bytes.to_vec();
            }
            (o.circuit, o.exit, o.info_hash())
        };
        let Ok(response) = AnnounceResponse::parse_http(bytes) else {
            return bytes.to_vec();
        };
        let seq = self.next_seq();
        let o = &mut self.observations[idx];
        o.announce_peers = response.peers.clone();
        o.response = Some((seq, at));
        self.graph
            .record_announce_peers(circuit, &response.peers, at);
        match (&mut self.hijacker, info_hash) {
            (Some(h), Some(ih)) if Some(exit) == self.hijack_exit => h
                .hijack_announce(ih, circuit, stream, &response, at)
                .encode_http(),
            _ => bytes.to_vec(),
        }
    }

    /// A connection reaching the malicious peer from `source`, opening with
    /// `payload`. Returns the trace it produced, if any.
    pub fn accept_connection(
        &mut self,
        source: Endpoint,
        payload: &[u8],
        now: SimTime,
    ) -> Option<TraceResult> {
        let h = self.hijacker.as_ref()?;
        let hs = BtHandshake::decode(payload).ok()?;
        match h.malicious_peer_accept(source, &hs, &self.exit_list, now) {
            Ok(Some(r)) => {
                self.push_result(r);
                Some(r)
            }
            Ok(None) => None,
            Err(e) => {
                self.ambiguous += 1;
                self.log.push(TraceLogRecord::Ambiguous {
                    tick: now.ticks(),
                    candidates: e.circuits.len(),
                });
                None
            }
        }
    }

    pub fn propagate(&self) -> Propagation {
        propagate_traces(&self.graph, &self.results, &self.observations)
    }

    /// Closes the run and hands out everything the adversary collected.
    pub fn finish(self) -> AdversaryOutput {
        let propagation = self.propagate();
        let mut hijacked_circuits: Vec<CircuitId> = self
            .hijacker
            .as_ref()
            .map(|h| h.all_records().map(|r| r.circuit).collect())
            .unwrap_or_default();
        hijacked_circuits.sort();
        hijacked_circuits.dedup();
        AdversaryOutput {
            edges: self.graph.edges().to_vec(),
            observations: self.observations,
            results: self.results,
            propagation,
            trace_log: self.log,
            hijacked_circuits,
            ambiguous_correlations: self.ambiguous,
        }
    }
}

/// What the adversary holds once a run is over.
#[derive(Clone, Debug, Default)]
pub struct AdversaryOutput {
    pub observations: Vec<ExitObservation>,
    pub results: Vec<TraceResult>,
    pub edges: Vec<LinkEdge>,
    pub propagation: Propagation,
    pub trace_log: Vec<TraceLogRecord>,
    pub hijacked_circuits: Vec<CircuitId>,
    pub ambiguous_correlations: usize,
}
