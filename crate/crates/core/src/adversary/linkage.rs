use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{DisjointSet, ExitObservation};
use crate::sim::SimTime;
use crate::tor::CircuitId;
use crate::{Endpoint, PeerId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PeerIdMatch,
    FreshEndpointFollow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkEdge {
    /// The circuit the evidence was seen on earlier.
    pub from: CircuitId,
    /// The circuit carrying the observation that created the edge.
    pub to: CircuitId,
    pub provenance: Provenance,
    pub at: SimTime,
    /// Whether the edge joined two components.
    pub merged: bool,
}

/// Endpoints recently handed out in tracker answers, keyed by endpoint, with
/// the circuits that carried them.
#[derive(Clone, Debug)]
pub struct FreshEndpointIndex {
    window: SimTime,
    entries: HashMap<Endpoint, Vec<(CircuitId, SimTime)>>,
}

impl FreshEndpointIndex {
    pub fn new(window: SimTime) -> Self {
        Self {
            window,
            entries: HashMap::new(),
        }
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    pub fn insert(&mut self, endpoint: Endpoint, circuit: CircuitId, at: SimTime) {
        let window = self.window;
        let list = self.entries.entry(endpoint).or_default();
        list.retain(|&(_, t)| at.saturating_sub(t) <= window);
        list.push((circuit, at));
    }

    /// Distinct circuits other than `except` that returned `endpoint` within
    /// the window before `now`, in ascending order.
    pub fn sources(&self, endpoint: Endpoint, now: SimTime, except: CircuitId) -> Vec<CircuitId> {
        let mut out: Vec<CircuitId> = self
            .entries
            .get(&endpoint)
            .into_iter()
            .flatten()
            .filter(|&&(c, t)| c != except && t <= now && now.saturating_sub(t) <= self.window)
            .map(|&(c, _)| c)
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Union-find over circuits with a log of every linking edge.
#[derive(Clone, Debug)]
pub struct LinkageGraph {
    sets: DisjointSet,
    edges: Vec<LinkEdge>,
    last_circuit_for_peer_id: HashMap<PeerId, CircuitId>,
    fresh: FreshEndpointIndex,
    pub link_peer_id: bool,
    pub link_fresh_endpoint: bool,
}

impl LinkageGraph {
    pub fn new(window: SimTime) -> Self {
        Self {
            sets: DisjointSet::new(),
            edges: Vec::new(),
            last_circuit_for_peer_id: HashMap::new(),
            fresh: FreshEndpointIndex::new(window),
            link_peer_id: true,
            link_fresh_endpoint: true,
        }
    }

    pub fn edges(&self) -> &[LinkEdge] {
        &self.edges
    }

    pub fn fresh_index(&self) -> &FreshEndpointIndex {
        &self.fresh
    }

    pub fn touch(&mut self, c: CircuitId) {
        self.sets.ensure(c.0 as usize);
    }

    pub fn find(&self, c: CircuitId) -> CircuitId {
        CircuitId(self.sets.root(c.0 as usize) as u32)
    }

    pub fn same_component(&self, a: CircuitId, b: CircuitId) -> bool {
        self.find(a) == self.find(b)
    }

    /// Adds an edge between two circuits.
    pub fn union(
        &mut self,
        from: CircuitId,
        to: CircuitId,
        provenance: Provenance,
        at: SimTime,
    ) -> LinkEdge {
        let merged = self.sets.union(from.0 as usize, to.0 as usize);
        let edge = LinkEdge {
            from,
            to,
            provenance,
            at,
            merged,
        };
        self.edges.push(edge);
        edge
    }

    /// Applies the peer-id and fresh-endpoint patterns to one observation.
    /// Encrypted streams never yield a peer id, so they cannot match.
    pub fn link_observation(&mut self, obs: &ExitObservation) -> Vec<LinkEdge> {
        self.touch(obs.circuit);
        let mut out = Vec::new();
        if self.link_peer_id {
            if let Some(pid) = obs.peer_id() {
                if let Some(prev) = self.last_circuit_for_peer_id.insert(pid, obs.circuit) {
                    if prev != obs.circuit {
                        out.push(self.union(prev, obs.circuit, Provenance::PeerIdMatch, obs.at));
                    }
                }
            }
        }
        if self.link_fresh_endpoint {
            if let [only] = self.fresh.sources(obs.destination, obs.at, obs.circuit)[..] {
                out.push(self.union(only, obs.circuit, Provenance::FreshEndpointFollow, obs.at));
            }
        }
        out
    }

    /// Records the peers of a tracker answer seen on `circuit`.
    pub fn record_announce_peers(&mut self, circuit: CircuitId, peers: &[Endpoint], at: SimTime) {
        self.touch(circuit);
        for &p in peers {
            self.fresh.insert(p, circuit, at);
        }
    }

    /// Components keyed by their smallest circuit id, members ascending.
    pub fn components(&self) -> BTreeMap<CircuitId, Vec<CircuitId>> {
        let mut by_root: HashMap<usize, Vec<CircuitId>> = HashMap::new();
        for i in 0..self.sets.len() {
            by_root
                .entry(self.sets.root(i))
                .or_default()
                .push(CircuitId(i as u32));
        }
        by_root
            .into_values()
            .map(|members| (members[0], members))
            .collect()
    }
}
